#include <sys/socket.h>

#include <future>
#include <thread>

#include <gtest/gtest.h>

#include "delta/ngram.h"
#include "delta/remote/client.h"
#include "delta/remote/protocol.h"
#include "delta/remote/stub_server.h"
#include "delta/remote/transport.h"
#include "delta/synthetic.h"
#include "support/expect_error.h"

namespace delta::remote {
namespace {

using delta::testing::expect_error;

std::pair<int, int> socket_pair() {
  int fds[2];
  EXPECT_EQ(::socketpair(AF_UNIX, SOCK_STREAM, 0, fds), 0);
  return {fds[0], fds[1]};
}

TEST(Protocol, HelloRoundTrip) {
  EXPECT_EQ(parse_hello(R"({"type":"hello","version":1,"vocab_size":50257})").vocab_size, 50257);
  EXPECT_EQ(encode(HelloFrame{1, 12}), R"({"type":"hello","version":1,"vocab_size":12})");
}

TEST(Protocol, HelloErrors) {
  expect_error(ErrorCode::kHandshake, [] { parse_hello(R"({"type":"hello","version":1})"); },
               "vocab_size");
  try {
    parse_hello(R"({"type":"hello","version":2,"vocab_size":3})");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kHandshake);
    const std::string msg = e.what();
    EXPECT_NE(msg.find('2'), std::string::npos);
    EXPECT_NE(msg.find('1'), std::string::npos);
  }
}

TEST(Protocol, ScoreRequestFormat) {
  EXPECT_EQ(encode(ScoreRequest{7, {1, 2, 3}}), R"({"type":"score","id":7,"tokens":[1,2,3]})");
  const auto r = parse_score_request(R"({"type":"score","id":7,"tokens":[1,2,3]})");
  EXPECT_EQ(r.id, 7);
  EXPECT_EQ(r.tokens, (std::vector<TokenId>{1, 2, 3}));
}

TEST(Protocol, DenseRoundTripIsBitExact) {
  const std::vector<double> values{0.1, -2.0, 1.0 / 3.0, 1e-300, -7.25e17};
  const auto line = encode(LogitsFrame{7, values});
  const auto frame = std::get<LogitsFrame>(parse_server_frame(line));
  EXPECT_EQ(frame.id, 7);
  EXPECT_EQ(std::get<std::vector<double>>(frame.payload), values);
}

TEST(Protocol, SparseDensify) {
  const auto frame = std::get<LogitsFrame>(
      parse_server_frame(R"({"type":"logits","id":7,"topk":[[5,3.2],[9,1.1]],"rest":-10.0})"));
  const auto dense = densify(std::get<SparseLogits>(frame.payload), 12);
  for (std::size_t i = 0; i < 12; ++i) {
    const double want = i == 5 ? 3.2 : i == 9 ? 1.1 : -10.0;
    EXPECT_EQ(dense[i], want);
  }
}

TEST(Protocol, DensifyErrors) {
  expect_error(ErrorCode::kProtocol, [] { densify(SparseLogits{{{1, 0.0}, {1, 2.0}}, 0.0}, 4); });
  expect_error(ErrorCode::kProtocol, [] { densify(SparseLogits{{{4, 0.0}}, 0.0}, 4); });
}

TEST(Protocol, SparsifyIsExact) {
  const LogitVector v({-10, -10, 3, -10, -10, 1, -10});
  const auto s = sparsify(v);
  ASSERT_TRUE(s.has_value());
  EXPECT_EQ(s->rest, -10);
  EXPECT_EQ(s->entries.size(), 2u);
  EXPECT_EQ(densify(*s, v.size()), v);
  EXPECT_FALSE(sparsify(LogitVector({1, 2, 3})).has_value());
}

TEST(Protocol, MalformedFrames) {
  expect_error(ErrorCode::kProtocol, [] { parse_server_frame("not json"); });
  expect_error(ErrorCode::kProtocol, [] { parse_server_frame(R"({"type":"logits","id":1})"); });
  expect_error(ErrorCode::kProtocol, [] { parse_server_frame(R"({"type":"bogus"})"); });
  expect_error(ErrorCode::kProtocol, [] { parse_score_request(R"({"type":"score","id":"x","tokens":[]})"); });
}

TEST(Protocol, ErrorFrame) {
  const auto f = std::get<ErrorFrame>(parse_server_frame(R"({"type":"error","id":null,"message":"bad"})"));
  EXPECT_FALSE(f.id.has_value());
  EXPECT_EQ(f.message, "bad");
  EXPECT_EQ(encode(ErrorFrame{3, "x"}), R"({"type":"error","id":3,"message":"x"})");
}

TEST(StubServer, ConstantScorer) {
  const auto s = SyntheticScorer::constant({1, 2});
  EXPECT_EQ(stub_server_step(s, R"({"type":"score","id":4,"tokens":[0,1]})"),
            R"({"type":"logits","id":4,"dense":[1.0,2.0]})");
}

TEST(StubServer, ErrorFrames) {
  const auto s = SyntheticScorer::constant({1, 2});
  auto is_error = [](const std::string& line) {
    return std::holds_alternative<ErrorFrame>(parse_server_frame(line));
  };
  const auto oov = stub_server_step(s, R"({"type":"score","id":5,"tokens":[2]})");
  ASSERT_TRUE(is_error(oov));
  EXPECT_EQ(std::get<ErrorFrame>(parse_server_frame(oov)).id, 5);
  EXPECT_TRUE(is_error(stub_server_step(s, "{garbage")));
  EXPECT_TRUE(is_error(stub_server_step(s, R"({"type":"score","id":6})")));
  EXPECT_TRUE(is_error(stub_server_step(s, R"({"type":"score","id":6,"tokens":[-1]})")));
  EXPECT_TRUE(is_error(stub_server_step(s, "")));
}

class Served {
 public:
  Served(const Scorer& model, StubOptions options = {}) {
    auto [client_fd, server_fd] = socket_pair();
    server_channel_ = std::make_unique<LineChannel>(server_fd, server_fd);
    thread_ = std::thread([this, &model, options] { serve_channel(model, *server_channel_, options); });
    client_ = std::make_unique<RemoteScorer>(client_fd, 5000, "served");
  }
  ~Served() {
    client_.reset();
    thread_.join();
  }
  RemoteScorer& client() { return *client_; }

 private:
  std::unique_ptr<LineChannel> server_channel_;
  std::thread thread_;
  std::unique_ptr<RemoteScorer> client_;
};

NGramModel small_model() {
  const auto vocab = Vocabulary::from_words(std::vector<std::string>{"a b c d e"});
  const std::vector<std::vector<TokenId>> corpus{{2, 3, 4, 2, 5, 6, 1}, {3, 3, 4, 1}};
  return train_ngram(corpus, 3, 0.5, vocab);
}

TEST(RemoteScorer, MatchesLocalScorer) {
  const auto m = small_model();
  Served served(m);
  EXPECT_EQ(served.client().vocab_size(), m.vocab_size());
  const std::vector<std::vector<TokenId>> prefixes{{}, {2}, {2, 3}, {4, 4, 4}, {6, 1, 0}};
  for (const auto& p : prefixes) EXPECT_EQ(served.client().score(p), m.score(p));
}

TEST(RemoteScorer, SparseResponses) {
  const auto m = small_model();
  Served served(m, StubOptions{true});
  const std::vector<TokenId> p{2, 3};
  EXPECT_EQ(served.client().score(p), m.score(p));
}

TEST(RemoteScorer, PipelinedRequestsFromManyThreads) {
  const auto m = small_model();
  Served served(m);
  std::vector<std::thread> threads;
  std::atomic<int> mismatches{0};
  for (int w = 0; w < 8; ++w) {
    threads.emplace_back([&, w] {
      for (int i = 0; i < 125; ++i) {
        std::vector<TokenId> p{static_cast<TokenId>((w + i) % 7), static_cast<TokenId>(i % 7)};
        if (served.client().remote_score(p, w * 1000 + i) != m.score(p)) ++mismatches;
      }
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(mismatches.load(), 0);
}

TEST(RemoteScorer, DuplicateIdAndRangeChecks) {
  const auto m = small_model();
  Served served(m);
  expect_error(ErrorCode::kVocabMismatch, [&] { served.client().remote_score(std::vector<TokenId>{99}, 1); });
}

// Answers a batch of requests in reverse arrival order.
TEST(RemoteScorer, OutOfOrderResponses) {
  const auto s = SyntheticScorer::bigram({{0, 1, 2}, {3, 4, 5}, {6, 7, 8}});
  auto [client_fd, server_fd] = socket_pair();
  std::thread server([&s, fd = server_fd] {
    LineChannel ch(fd, fd);
    ch.write_line(encode(HelloFrame{1, 3}));
    std::vector<std::string> requests;
    std::string line;
    while (requests.size() < 3 && ch.read_line(line, 5000) == LineChannel::ReadStatus::kLine) {
      requests.push_back(line);
    }
    for (auto it = requests.rbegin(); it != requests.rend(); ++it) ch.write_line(stub_server_step(s, *it));
    while (ch.read_line(line, 5000) == LineChannel::ReadStatus::kLine) {
    }
  });
  {
    RemoteScorer client(client_fd, 5000);
    auto f1 = client.submit(std::vector<TokenId>{0}, 1);
    auto f2 = client.submit(std::vector<TokenId>{1}, 2);
    auto f3 = client.submit(std::vector<TokenId>{2}, 3);
    EXPECT_EQ(f1.get().values(), (std::vector<double>{0, 1, 2}));
    EXPECT_EQ(f2.get().values(), (std::vector<double>{3, 4, 5}));
    EXPECT_EQ(f3.get().values(), (std::vector<double>{6, 7, 8}));
  }
  server.join();
}

TEST(RemoteScorer, ErrorFrameFailsOnlyThatRequest) {
  const auto s = SyntheticScorer::constant({1, 2});
  auto [client_fd, server_fd] = socket_pair();
  std::thread server([&s, fd = server_fd] {
    LineChannel ch(fd, fd);
    ch.write_line(encode(HelloFrame{1, 2}));
    std::string line;
    while (ch.read_line(line, 5000) == LineChannel::ReadStatus::kLine) {
      const auto req = parse_score_request(line);
      ch.write_line(req.id == 2 ? encode(ErrorFrame{2, "model exploded"}) : stub_server_step(s, line));
    }
  });
  {
    RemoteScorer client(client_fd, 5000);
    EXPECT_EQ(client.remote_score(std::vector<TokenId>{0}, 1).values(), (std::vector<double>{1, 2}));
    expect_error(ErrorCode::kScorer, [&] { client.remote_score(std::vector<TokenId>{0}, 2); }, "exploded");
    EXPECT_EQ(client.remote_score(std::vector<TokenId>{1}, 3).values(), (std::vector<double>{1, 2}));
  }
  server.join();
}

TEST(RemoteScorer, TimeoutAndHandshakeFailures) {
  {
    auto [client_fd, server_fd] = socket_pair();
    expect_error(ErrorCode::kConnection, [fd = client_fd] { RemoteScorer(fd, 100); });
    ::close(server_fd);
  }
  {
    auto [client_fd, server_fd] = socket_pair();
    LineChannel server(server_fd, server_fd);
    server.write_line(R"({"type":"hello","version":2,"vocab_size":3})");
    expect_error(ErrorCode::kHandshake, [fd = client_fd] { RemoteScorer(fd, 1000); });
  }
  {
    auto [client_fd, server_fd] = socket_pair();
    LineChannel server(server_fd, server_fd);
    server.write_line(encode(HelloFrame{1, 3}));
    RemoteScorer client(client_fd, 150);
    expect_error(ErrorCode::kTimeout, [&] { client.remote_score(std::vector<TokenId>{0}, 1); });
  }
}

TEST(RemoteScorer, ServerDisconnectFailsPending) {
  auto [client_fd, server_fd] = socket_pair();
  auto server = std::make_unique<LineChannel>(server_fd, server_fd);
  server->write_line(encode(HelloFrame{1, 3}));
  RemoteScorer client(client_fd, 5000);
  auto f = client.submit(std::vector<TokenId>{0}, 1);
  server.reset();
  EXPECT_THROW(f.get(), Error);
}

TEST(RemoteScorer, NonFiniteLogitsRejected) {
  auto [client_fd, server_fd] = socket_pair();
  std::thread server([fd = server_fd] {
    LineChannel ch(fd, fd);
    ch.write_line(encode(HelloFrame{1, 2}));
    std::string line;
    while (ch.read_line(line, 5000) == LineChannel::ReadStatus::kLine) {
      const auto req = parse_score_request(line);
      ch.write_line(R"({"type":"logits","id":)" + std::to_string(req.id) + R"(,"dense":[1.0,1e999]})");
    }
  });
  {
    RemoteScorer client(client_fd, 2000);
    EXPECT_THROW(client.remote_score(std::vector<TokenId>{0}, 1), Error);
  }
  server.join();
}

TEST(Tcp, ServerRoundTrip) {
  const auto m = small_model();
  TcpStubServer server(m, 0);
  ASSERT_NE(server.port(), 0);
  auto endpoint = ScorerEndpoint::parse("tcp://127.0.0.1:" + std::to_string(server.port()));
  RemoteScorer a(endpoint);
  RemoteScorer b(endpoint);
  const std::vector<TokenId> p{2, 3};
  EXPECT_EQ(a.score(p), m.score(p));
  EXPECT_EQ(b.score(p), m.score(p));
  server.stop();
}

TEST(Endpoint, Parse) {
  const auto t = ScorerEndpoint::parse("tcp://localhost:9000");
  EXPECT_EQ(t.transport, ScorerEndpoint::Transport::kTcp);
  EXPECT_EQ(t.host, "localhost");
  EXPECT_EQ(t.port, 9000);
  const auto s = ScorerEndpoint::parse("stdio:/bin/server --model m.json");
  EXPECT_EQ(s.transport, ScorerEndpoint::Transport::kStdio);
  EXPECT_EQ(s.command, (std::vector<std::string>{"/bin/server", "--model", "m.json"}));
  EXPECT_THROW(ScorerEndpoint::parse("udp://x:1"), Error);
  EXPECT_THROW(ScorerEndpoint::parse("tcp://x"), Error);
}

#ifdef DELTACTL_PATH
TEST(Stdio, SubprocessServer) {
  const auto m = small_model();
  char path[] = "/tmp/delta-stdio-XXXXXX.json";
  const int fd = ::mkstemps(path, 5);
  ASSERT_GE(fd, 0);
  ::close(fd);
  m.save(path);
  {
    RemoteScorer client(ScorerEndpoint::parse(std::string("stdio:") + DELTACTL_PATH +
                                              " serve-stub --stdio --model " + path));
    const std::vector<TokenId> p{3, 3};
    EXPECT_EQ(client.score(p), m.score(p));
  }
  std::remove(path);
}
#endif

}  // namespace
}  // namespace delta::remote
