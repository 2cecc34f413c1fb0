#include "fstx/external.hpp"

#include <netdb.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <thread>

#include "fstx/errors.hpp"
#include "json.hpp"

extern char** environ;

namespace fstx {

namespace {

std::string join(const std::vector<std::string>& argv) {
  std::string out;
  for (const auto& a : argv) out += (out.empty() ? "" : " ") + a;
  return out;
}

std::string mask_text(const std::vector<std::uint8_t>& mask) {
  std::string s;
  for (auto b : mask) s += b ? '1' : '0';
  return s;
}

}  // namespace

ExternalScorer::ExternalScorer(int fd, int child, std::string endpoint, ExternalOptions options)
    : fd_(fd), child_(child), endpoint_(std::move(endpoint)), options_(options) {
  if (options_.window == 0) options_.window = 1;
}

std::unique_ptr<ExternalScorer> ExternalScorer::spawn(std::vector<std::string> argv, ExternalOptions options) {
  if (argv.empty()) throw ParameterError("external scorer: empty command");
  int sv[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0) {
    throw EvaluationError("external scorer '" + join(argv) + "': socketpair failed: " + std::strerror(errno));
  }
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, sv[1], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, sv[1], STDOUT_FILENO);
  std::vector<char*> cargv;
  for (auto& a : argv) cargv.push_back(a.data());
  cargv.push_back(nullptr);
  pid_t pid = -1;
  const int rc = ::posix_spawnp(&pid, cargv[0], &actions, nullptr, cargv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  ::close(sv[1]);
  if (rc != 0) {
    ::close(sv[0]);
    throw EvaluationError("external scorer '" + join(argv) + "': cannot start: " + std::strerror(rc));
  }
  return std::unique_ptr<ExternalScorer>(new ExternalScorer(sv[0], pid, join(argv), options));
}

std::unique_ptr<ExternalScorer> ExternalScorer::connect(const std::string& host, std::uint16_t port,
                                                        ExternalOptions options) {
  const std::string endpoint = "tcp:" + host + ":" + std::to_string(port);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* found = nullptr;
  const int rc = ::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &found);
  if (rc != 0) throw EvaluationError("external scorer '" + endpoint + "': " + ::gai_strerror(rc));
  int fd = -1;
  int last_errno = 0;
  for (auto* a = found; a; a = a->ai_next) {
    fd = ::socket(a->ai_family, a->ai_socktype | SOCK_CLOEXEC, a->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) break;
    last_errno = errno;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(found);
  if (fd < 0) throw EvaluationError("external scorer '" + endpoint + "': cannot connect: " + std::strerror(last_errno));
  return std::unique_ptr<ExternalScorer>(new ExternalScorer(fd, -1, endpoint, options));
}

ExternalScorer::~ExternalScorer() {
  if (fd_ >= 0) ::close(fd_);
  if (child_ > 0) {
    // The child sees EOF and should leave on its own; give it a moment.
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(child_, nullptr, WNOHANG) == child_) return;
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ::kill(child_, SIGKILL);
    ::waitpid(child_, nullptr, 0);
  }
}

void ExternalScorer::fail_transport(const std::string& what) const {
  throw EvaluationError("external scorer '" + endpoint_ + "': " + what);
}

void ExternalScorer::send_line(const std::string& line) {
  std::size_t sent = 0;
  const std::string data = line + "\n";
  while (sent < data.size()) {
    const auto n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail_transport(std::string("write failed: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(n);
  }
}

std::string ExternalScorer::read_line() {
  const auto deadline = std::chrono::steady_clock::now() + options_.timeout;
  for (;;) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) fail_transport("no reply within " + std::to_string(options_.timeout.count()) + " ms");
    pollfd p{fd_, POLLIN, 0};
    const int ready = ::poll(&p, 1, static_cast<int>(left.count()));
    if (ready < 0) {
      if (errno == EINTR) continue;
      fail_transport(std::string("poll failed: ") + std::strerror(errno));
    }
    if (ready == 0) continue;
    char chunk[4096];
    const auto n = ::recv(fd_, chunk, sizeof(chunk), 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail_transport(std::string("read failed: ") + std::strerror(errno));
    }
    if (n == 0) {
      std::string why = "connection closed";
      int status = 0;
      if (child_ > 0 && ::waitpid(child_, &status, 0) == child_) {
        child_ = -1;
        why = WIFEXITED(status) ? "process exited with status " + std::to_string(WEXITSTATUS(status))
                                : "process killed by signal " + std::to_string(WTERMSIG(status));
      }
      fail_transport(why);
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

void ExternalScorer::register_image(const std::string& image_id, const GridImage& image) {
  nlohmann::json grids = nlohmann::json::array();
  for (std::size_t c = 0; c < image.cell_count(); ++c) {
    const auto cell = image.cell(c);
    grids.push_back(std::vector<double>(cell.begin(), cell.end()));
  }
  const nlohmann::json msg = {{"op", "register"}, {"image_id", image_id}, {"grids", grids}};
  std::lock_guard lock(mutex_);
  send_line(msg.dump());
}

double ExternalScorer::score(const std::string& image_id, const std::vector<std::uint8_t>& cell_mask, int label) {
  return score_batch(image_id, {cell_mask}, label).front();
}

std::vector<double> ExternalScorer::score_batch(const std::string& image_id,
                                                const std::vector<std::vector<std::uint8_t>>& masks, int label) {
  std::lock_guard lock(mutex_);
  std::vector<double> out(masks.size(), 0.0);
  std::map<std::uint64_t, std::size_t> pending;
  std::size_t next = 0;
  std::optional<EvaluationError> first_error;
  while (next < masks.size() || !pending.empty()) {
    while (!first_error && next < masks.size() && pending.size() < options_.window) {
      const std::uint64_t id = next_id_++;
      const nlohmann::json req = {{"id", id}, {"op", "score"}, {"image_id", image_id}, {"mask", masks[next]},
                                  {"label", label}};
      send_line(req.dump());
      pending[id] = next++;
    }
    if (pending.empty()) break;
    const std::string line = read_line();
    nlohmann::json reply;
    try {
      reply = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw ProtocolError("external scorer '" + endpoint_ + "': malformed reply: " + line);
    }
    if (!reply.is_object() || !reply.contains("id") || !reply["id"].is_number_unsigned()) {
      throw ProtocolError("external scorer '" + endpoint_ + "': reply without a valid id: " + line);
    }
    const auto it = pending.find(reply["id"].get<std::uint64_t>());
    if (it == pending.end()) throw ProtocolError("external scorer '" + endpoint_ + "': unexpected reply id: " + line);
    const std::size_t slot = it->second;
    pending.erase(it);
    if (reply.contains("error")) {
      // Keep draining so the connection stays in step.
      if (!first_error) {
        const std::string msg = reply["error"].is_string() ? reply["error"].get<std::string>() : reply["error"].dump();
        first_error.emplace("external scorer '" + endpoint_ + "': " + msg, mask_text(masks[slot]));
      }
      continue;
    }
    if (!reply.contains("score") || !reply["score"].is_number()) {
      throw ProtocolError("external scorer '" + endpoint_ + "': reply without a numeric score: " + line);
    }
    out[slot] = reply["score"].get<double>();
  }
  if (first_error) throw *first_error;
  return out;
}

ExternalGame::ExternalGame(ExternalScorer& scorer, std::string image_id, const GridImage& image, int label,
                           std::size_t side)
    : scorer_(scorer),
      image_id_(std::move(image_id)),
      label_(label),
      partition_(side),
      image_side_(image.side()),
      block_(0) {
  if (side == 0 || image_side_ == 0 || image_side_ % side != 0) {
    throw PartitionError("image side " + std::to_string(image_side_) + " does not split evenly into " +
                         std::to_string(side) + "x" + std::to_string(side) + " grids");
  }
  block_ = image_side_ / side;
  scorer_.register_image(image_id_, image);
}

std::vector<std::uint8_t> ExternalGame::cell_mask(const CoalitionMask& mask) const {
  if (mask.size() != partition_.player_count()) {
    throw DimensionError("mask length " + std::to_string(mask.size()) + " does not match " +
                         std::to_string(partition_.player_count()) + " players");
  }
  std::vector<std::uint8_t> cells(image_side_ * image_side_);
  for (std::size_t r = 0; r < image_side_; ++r) {
    for (std::size_t c = 0; c < image_side_; ++c) {
      cells[r * image_side_ + c] = mask.contains(partition_.index(r / block_, c / block_)) ? 1 : 0;
    }
  }
  return cells;
}

double ExternalGame::evaluate(const CoalitionMask& mask) const {
  double v = 0.0;
  evaluate_batch(std::span<const CoalitionMask>(&mask, 1), std::span<double>(&v, 1));
  return v;
}

void ExternalGame::evaluate_batch(std::span<const CoalitionMask> masks, std::span<double> out) const {
  if (masks.size() != out.size()) throw DimensionError("evaluate_batch: output size mismatch");
  std::vector<std::vector<std::uint8_t>> cells;
  cells.reserve(masks.size());
  for (const auto& m : masks) cells.push_back(cell_mask(m));
  std::vector<double> scores;
  try {
    scores = scorer_.score_batch(image_id_, cells, label_);
  } catch (const EvaluationError& e) {
    // Report the failing coalition in player terms.
    std::size_t bad = 0;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (mask_text(cells[i]) == e.mask_bits()) bad = i;
    }
    throw EvaluationError(e.what(), masks.empty() ? std::string() : masks[bad].to_string());
  }
  std::copy(scores.begin(), scores.end(), out.begin());
}

}  // namespace fstx
