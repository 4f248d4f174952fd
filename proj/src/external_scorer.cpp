#include "citerec/external_scorer.hpp"

#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <stdexcept>

#include "json.hpp"

extern char** environ;

namespace citerec {

std::string encode_scorer_request(const RerankInput& input, std::uint64_t id) {
  nlohmann::json j = {{"id", id},
                      {"citing_abstract", input.citing_abstract},
                      {"context", input.context},
                      {"intent", std::string(to_string(input.intent))},
                      {"candidate_abstract", input.candidate_abstract}};
  return j.dump() + "\n";
}

std::optional<double> decode_scorer_response(std::string_view line) {
  const auto j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  auto it = j.find("score");
  if (it == j.end() || !it->is_number()) return std::nullopt;
  const double s = it->get<double>();
  if (!(s >= 0.0 && s <= 1.0)) return std::nullopt;
  return s;
}

ExternalProcessScorer::ExternalProcessScorer(std::vector<std::string> argv,
                                             std::chrono::milliseconds timeout)
    : timeout_(timeout) {
  if (argv.empty()) throw std::invalid_argument("external scorer command is empty");
  int fds[2];
  if (socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0) {
    throw std::runtime_error(std::string("socketpair: ") + std::strerror(errno));
  }
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, fds[1], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, fds[1], STDOUT_FILENO);
  std::vector<char*> args;
  for (auto& a : argv) args.push_back(a.data());
  args.push_back(nullptr);
  pid_t pid = -1;
  const int rc = posix_spawnp(&pid, args[0], &actions, nullptr, args.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  close(fds[1]);
  if (rc != 0) {
    close(fds[0]);
    throw std::runtime_error("cannot start external scorer " + argv[0] + ": " + std::strerror(rc));
  }
  pid_ = pid;
  fd_ = fds[0];
}

ExternalProcessScorer::~ExternalProcessScorer() {
  if (fd_ >= 0) close(fd_);
  if (pid_ > 0) {
    kill(pid_, SIGTERM);
    int status = 0;
    waitpid(pid_, &status, 0);
  }
}

std::optional<std::string> ExternalProcessScorer::read_line(
    std::chrono::steady_clock::time_point deadline) {
  for (;;) {
    if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) return std::nullopt;
    pollfd p{fd_, POLLIN, 0};
    const int ready = poll(&p, 1, static_cast<int>(left.count()));
    if (ready < 0 && errno == EINTR) continue;
    if (ready <= 0) return std::nullopt;
    char chunk[4096];
    const auto n = recv(fd_, chunk, sizeof chunk, 0);
    if (n <= 0) {
      broken_ = true;
      return std::nullopt;
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

std::optional<double> ExternalProcessScorer::score(const RerankInput& input) {
  std::lock_guard lock(mutex_);
  if (broken_) {
    ++failures_;
    return std::nullopt;
  }
  const auto id = next_id_++;
  const auto request = encode_scorer_request(input, id);
  std::size_t sent = 0;
  while (sent < request.size()) {
    const auto n = send(fd_, request.data() + sent, request.size() - sent, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) {
      broken_ = true;
      ++failures_;
      return std::nullopt;
    }
    sent += static_cast<std::size_t>(n);
  }
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  for (;;) {
    const auto line = read_line(deadline);
    if (!line) break;
    // Replies to earlier, timed-out requests carry their own id; skip them.
    const auto j = nlohmann::json::parse(*line, nullptr, false);
    if (j.is_object() && j.contains("id") && j["id"].is_number_unsigned() &&
        j["id"].get<std::uint64_t>() != id) {
      continue;
    }
    if (auto s = decode_scorer_response(*line)) return s;
    break;
  }
  ++failures_;
  return std::nullopt;
}

}  // namespace citerec
