#include <gtest/gtest.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <thread>

#include "fstx/errors.hpp"
#include "fstx/external.hpp"
#include "fstx/shapley.hpp"
#include "json.hpp"

using namespace fstx;

namespace {

std::unique_ptr<ExternalScorer> fake(const std::string& mode, ExternalOptions opts = {}) {
  return ExternalScorer::spawn({FSTX_FAKE_SCORER, mode}, opts);
}

std::vector<std::uint8_t> first_k(std::size_t n, std::size_t k) {
  std::vector<std::uint8_t> m(k, 1);
  m.resize(n, 0);
  return m;
}

GridImage ramp_image(std::size_t side, std::size_t depth) {
  GridImage img(side, depth);
  for (std::size_t i = 0; i < img.flat().size(); ++i) img.flat()[i] = 0.25 * static_cast<double>(i % 7) - 0.5;
  return img;
}

// One-connection TCP server speaking the popcount protocol.
class PopcountServer {
 public:
  PopcountServer() {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    ::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr));
    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    ::listen(listen_fd_, 1);
    thread_ = std::thread([this] { serve(); });
  }
  ~PopcountServer() {
    thread_.join();
    ::close(listen_fd_);
  }
  std::uint16_t port() const { return port_; }

 private:
  void serve() {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    std::string buf;
    char chunk[4096];
    for (;;) {
      const auto n = ::recv(fd, chunk, sizeof(chunk), 0);
      if (n <= 0) break;
      buf.append(chunk, static_cast<std::size_t>(n));
      std::size_t nl;
      while ((nl = buf.find('\n')) != std::string::npos) {
        const auto req = nlohmann::json::parse(buf.substr(0, nl));
        buf.erase(0, nl + 1);
        if (req["op"] != "score") continue;
        double v = 0;
        for (int b : req["mask"]) v += b;
        const std::string out = nlohmann::json({{"id", req["id"]}, {"score", v}}).dump() + "\n";
        ::send(fd, out.data(), out.size(), MSG_NOSIGNAL);
      }
    }
    ::close(fd);
  }

  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST(External, PopcountIsMonotoneOverNestedMasks) {
  auto s = fake("popcount");
  double prev = -1;
  for (std::size_t k = 0; k <= 16; ++k) {
    const double v = s->score("img", first_k(16, k), 1);
    EXPECT_EQ(v, static_cast<double>(k));
    EXPECT_GT(v, prev);
    prev = v;
  }
}

TEST(External, OutOfOrderRepliesAreMatchedById) {
  auto s = fake("reverse");
  s->register_image("a", ramp_image(4, 2));
  std::vector<std::vector<std::uint8_t>> masks;
  for (std::size_t k = 0; k <= 16; ++k) masks.push_back(first_k(16, k));
  const auto scores = s->score_batch("a", masks, 1);
  // Cumulative sums of the registered cells, in request order.
  const auto img = ramp_image(4, 2);
  double acc = 0;
  for (std::size_t k = 0; k <= 16; ++k) {
    EXPECT_DOUBLE_EQ(scores[k], acc);
    if (k < 16) acc += img.cell(k)[0] + img.cell(k)[1];
  }
}

TEST(External, DeadProcessNamesTheCommand) {
  auto s = fake("die");
  try {
    s->score("img", first_k(4, 2), 1);
    FAIL() << "expected EvaluationError";
  } catch (const EvaluationError& e) {
    EXPECT_NE(std::string(e.what()).find("fake_scorer die"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("status 3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(ExternalScorer::spawn({"/nonexistent/scorer-binary"}), EvaluationError);
}

TEST(External, MalformedReplyIsAProtocolErrorWithPayload) {
  auto s = fake("malformed");
  try {
    s->score("img", first_k(4, 1), 0);
    FAIL() << "expected ProtocolError";
  } catch (const ProtocolError& e) {
    EXPECT_NE(std::string(e.what()).find("this is not json"), std::string::npos);
  }
}

TEST(External, ErrorRepliesCarryTheMask) {
  auto s = fake("error");
  try {
    s->score_batch("img", {first_k(4, 1), first_k(4, 3)}, 0);
    FAIL() << "expected EvaluationError";
  } catch (const EvaluationError& e) {
    EXPECT_NE(std::string(e.what()).find("model exploded"), std::string::npos);
    EXPECT_EQ(e.mask_bits(), "1000");
  }
  // The connection is still usable afterwards: every reply was drained.
  EXPECT_THROW(s->score("img", first_k(4, 2), 0), EvaluationError);
}

TEST(External, TimeoutIsAnEvaluationError) {
  ExternalOptions opts;
  opts.timeout = std::chrono::milliseconds(200);
  auto s = fake("slow", opts);
  try {
    s->score("img", first_k(4, 1), 0);
    FAIL() << "expected EvaluationError";
  } catch (const EvaluationError& e) {
    EXPECT_NE(std::string(e.what()).find("200 ms"), std::string::npos) << e.what();
  }
}

TEST(External, TcpTransport) {
  PopcountServer server;
  {
    auto s = ExternalScorer::connect("127.0.0.1", server.port());
    EXPECT_EQ(s->endpoint(), "tcp:127.0.0.1:" + std::to_string(server.port()));
    EXPECT_EQ(s->score("x", first_k(9, 4), 1), 4.0);
    std::vector<std::vector<std::uint8_t>> masks(200, first_k(9, 9));
    for (double v : s->score_batch("x", masks, 1)) EXPECT_EQ(v, 9.0);
  }
}

TEST(ExternalGame, SumScorerGivesPerGridSums) {
  auto s = fake("sum");
  const auto img = ramp_image(4, 3);
  ExternalGame game(*s, "ramp", img, 1, 2);
  EXPECT_EQ(game.player_count(), 4u);
  EXPECT_FALSE(game.concurrent_safe());
  // Player 0 is the top-left 2x2 block of cells.
  EXPECT_EQ(game.cell_mask(CoalitionMask::from_word(1, 4)),
            (std::vector<std::uint8_t>{1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0}));
  const auto phi = sampled_shapley(game, {20, 5, 1}).phi;
  for (std::size_t p = 0; p < 4; ++p) {
    double expected = 0;
    for (std::size_t c = 0; c < 16; ++c) {
      const std::size_t player = (c / 4 / 2) * 2 + (c % 4) / 2;
      if (player != p) continue;
      for (double x : img.cell(c)) expected += x;
    }
    EXPECT_NEAR(phi[p], expected, 1e-12);
  }
}

TEST(ExternalGame, DeterministicAcrossSessions) {
  const auto img = ramp_image(4, 1);
  std::vector<double> first;
  for (int run = 0; run < 2; ++run) {
    auto s = fake("popcount");
    ExternalGame game(*s, "r", img, 0, 4);
    const auto phi = sampled_shapley(game, {10, 42, 1}).phi;
    if (run == 0) {
      first = phi;
    } else {
      EXPECT_EQ(phi, first);
    }
  }
}
