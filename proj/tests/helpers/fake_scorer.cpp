// Line-oriented scorer used by the external scorer tests.
//   fake_scorer overlap        score = share of candidate words found in the context
//   fake_scorer garbage-on N   reply with non-JSON to the Nth request (1-based)
//   fake_scorer sleep-on N     never answer the Nth request
//   fake_scorer exit-after N   exit after N replies
#include <chrono>
#include <cstdlib>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>

#include "json.hpp"

namespace {

std::set<std::string> words(const std::string& s) {
  std::set<std::string> out;
  std::string cur;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!cur.empty()) {
      out.insert(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.insert(cur);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string mode = argc > 1 ? argv[1] : "overlap";
  const long n = argc > 2 ? std::atol(argv[2]) : 0;
  std::string line;
  long count = 0;
  while (std::getline(std::cin, line)) {
    ++count;
    const auto req = nlohmann::json::parse(line, nullptr, false);
    if (mode == "garbage-on" && count == n) {
      std::cout << "not json" << std::endl;
      continue;
    }
    if (mode == "sleep-on" && count == n) {
      std::this_thread::sleep_for(std::chrono::seconds(5));
      continue;
    }
    const auto ctx = words(req.value("context", ""));
    const auto cand = words(req.value("candidate_abstract", ""));
    std::size_t hit = 0;
    for (const auto& w : cand) hit += ctx.count(w);
    const double score = cand.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(cand.size());
    std::cout << nlohmann::json{{"id", req.value("id", 0)}, {"score", score}}.dump() << std::endl;
    if (mode == "exit-after" && count == n) return 0;
  }
  return 0;
}
