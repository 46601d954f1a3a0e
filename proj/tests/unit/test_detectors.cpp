#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <thread>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "generators.hpp"
#include "mash/corpus/style.hpp"
#include "mash/detectors/external.hpp"
#include "mash/detectors/ppl_ratio.hpp"
#include "mash/detectors/supervised.hpp"
#include "mash/eval/metrics.hpp"

using namespace mash;
using namespace std::chrono_literals;
using detectors::DetectorOracle;

namespace {

std::string mock(const std::string& args) { return std::string("exec:") + MOCK_NDJSON + " " + args; }

struct Corpus {
  std::vector<TokenSeq> human;
  std::vector<TokenSeq> machine;
};

Corpus synthetic(std::size_t n, std::uint64_t seed) {
  const auto table = corpus::SynonymTable::load_default();
  Corpus c;
  for (const auto& h : corpus::synthesize_human_corpus(n, seed, table)) {
    c.human.push_back(h.tokens);
    c.machine.push_back(corpus::machine_style(h, seed, table).tokens);
  }
  return c;
}

}  // namespace

TEST(Oracle, CountsEveryQueryAndValidatesScores) {
  DetectorOracle oracle(gen::constant_detector(0.7), 0.5);
  EXPECT_EQ(oracle.decide({"a"}), Label::AI);
  EXPECT_DOUBLE_EQ(oracle.score({"b"}), 0.7);
  EXPECT_EQ(oracle.query_count(), 2U);
  EXPECT_THROW(static_cast<void>(oracle.score({})), ContractViolation);
  oracle.reset_queries();
  EXPECT_EQ(oracle.query_count(), 0U);

  DetectorOracle broken(gen::constant_detector(1.5));
  EXPECT_THROW(static_cast<void>(broken.score({"a"})), OracleUnavailable);
  DetectorOracle nan(gen::constant_detector(std::nan("")));
  EXPECT_THROW(static_cast<void>(nan.score({"a"})), OracleUnavailable);
  EXPECT_THROW(DetectorOracle(nullptr), ConfigError);
  EXPECT_THROW(DetectorOracle(gen::constant_detector(0.1), 1.0), ConfigError);
}

TEST(Oracle, ConcurrentQueriesAreAllCounted) {
  DetectorOracle oracle(gen::constant_detector(0.2));
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&oracle] {
      for (int i = 0; i < 250; ++i) {
        static_cast<void>(oracle.decide({"x"}));
      }
    });
  }
  for (auto& t : threads) {
    t.join();
  }
  EXPECT_EQ(oracle.query_count(), 1000U);
}

TEST(HashedFeaturizer, SortedUniqueAndInRange) {
  detectors::HashedFeaturizer fz(64, 3);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const auto f = fz.features(gen::random_tokens(rng, gen::word_pool(30), 1, 20));
    EXPECT_TRUE(std::is_sorted(f.begin(), f.end()));
    EXPECT_EQ(std::adjacent_find(f.begin(), f.end()), f.end());
    for (auto b : f) {
      EXPECT_LT(b, 64U);
    }
  }
  EXPECT_THROW(detectors::HashedFeaturizer(100), ConfigError);
}

TEST(Supervised, SeparatesStylesAndRoundTrips) {
  const auto c = synthetic(600, 5);
  std::vector<detectors::LabeledSeq> train;
  std::vector<detectors::LabeledSeq> test;
  for (std::size_t i = 0; i < c.human.size(); ++i) {
    auto& dst = i < 500 ? train : test;
    dst.push_back({c.human[i], Label::Human});
    dst.push_back({c.machine[i], Label::AI});
  }
  detectors::FitReport rep;
  const auto det = detectors::fit_supervised(train, {}, &rep);
  EXPECT_GE(detectors::accuracy(det, test), 0.9);
  const auto back = detectors::SupervisedDetector::from_checkpoint(det.to_checkpoint());
  for (const auto& t : test) {
    EXPECT_DOUBLE_EQ(back.evaluate(t.tokens), det.evaluate(t.tokens));
  }
  const auto loaded = detectors::detector_from_checkpoint(det.to_checkpoint());
  EXPECT_EQ(loaded->backend(), "supervised");
}

TEST(Supervised, RequiresBothLabels) {
  std::vector<detectors::LabeledSeq> one{{{"a"}, Label::Human}, {{"b"}, Label::Human}};
  EXPECT_THROW(detectors::fit_supervised(one, {}), ConfigError);
  std::vector<detectors::LabeledSeq> unk{{{"a"}, Label::Human}, {{"b"}, Label::AI}, {{"c"}, Label::Unknown}};
  EXPECT_THROW(detectors::fit_supervised(unk, {}), ConfigError);
}

TEST(PplRatio, CalibrationMapsIntoUnitIntervalAndRoundTrips) {
  const auto c = synthetic(400, 8);
  std::vector<TokenSeq> all = c.human;
  all.insert(all.end(), c.machine.begin(), c.machine.end());
  const auto vocab = corpus::Vocabulary::build(all);
  const auto det = detectors::fit_ppl_ratio(c.human, c.machine, vocab);
  std::vector<double> hs;
  std::vector<double> ms;
  for (std::size_t i = 0; i < c.human.size(); ++i) {
    hs.push_back(det.evaluate(c.human[i]));
    ms.push_back(det.evaluate(c.machine[i]));
    EXPECT_GE(hs.back(), 0.0);
    EXPECT_LE(ms.back(), 1.0);
  }
  // in-sample the ratio must rank machine text above human text
  EXPECT_GT(eval::roc(hs, ms).auroc, 0.5);
  const auto back = detectors::PplRatioDetector::from_checkpoint(det.to_checkpoint());
  EXPECT_DOUBLE_EQ(back.evaluate(c.machine[0]), det.evaluate(c.machine[0]));
  EXPECT_EQ(detectors::detector_from_checkpoint(det.to_checkpoint())->backend(), "ppl-ratio");
}

TEST(PplRatio, CalibrationClampsAndFlips) {
  detectors::RatioCalibration up{1.0, 3.0, true};
  EXPECT_DOUBLE_EQ(up.apply(0.0), 0.0);
  EXPECT_DOUBLE_EQ(up.apply(2.0), 0.5);
  EXPECT_DOUBLE_EQ(up.apply(9.0), 1.0);
  detectors::RatioCalibration down{1.0, 3.0, false};
  EXPECT_DOUBLE_EQ(down.apply(1.5), 0.75);
}

TEST(External, ProcessDetectorScoresOverNdjson) {
  auto det = std::make_shared<detectors::ExternalDetector>(detectors::open_channel(mock("detector")));
  DetectorOracle oracle(det);
  EXPECT_DOUBLE_EQ(oracle.score({"moreover", ",", "it", "rained", "."}), 0.9);
  EXPECT_DOUBLE_EQ(oracle.score({"it", "rained", "."}), 0.1);
  EXPECT_EQ(oracle.query_count(), 2U);
  EXPECT_THROW(static_cast<void>(det->to_checkpoint()), ConfigError);
}

TEST(External, ProtocolFailuresAreOracleUnavailable) {
  for (const char* mode : {"garbage", "wrong-id", "die"}) {
    detectors::ExternalDetector det(detectors::open_channel(mock(std::string("detector --mode ") + mode)));
    EXPECT_THROW(static_cast<void>(det.evaluate({"x"})), OracleUnavailable) << mode;
  }
  detectors::ExternalDetector slow(detectors::open_channel(mock("detector --mode sleep"), 200ms));
  const auto t0 = std::chrono::steady_clock::now();
  EXPECT_THROW(static_cast<void>(slow.evaluate({"x"})), OracleUnavailable);
  EXPECT_LT(std::chrono::steady_clock::now() - t0, 5s);
  // a timed-out channel stays unusable
  EXPECT_THROW(static_cast<void>(slow.evaluate({"x"})), OracleUnavailable);
}

TEST(External, BadEndpointsAreConfigErrors) {
  EXPECT_THROW(detectors::open_channel("http://x"), ConfigError);
  EXPECT_THROW(detectors::open_channel("tcp:localhost"), ConfigError);
  EXPECT_THROW(detectors::open_channel("tcp:localhost:notaport"), ConfigError);
}

TEST(External, TcpDetector) {
  const int srv = ::socket(AF_INET, SOCK_STREAM, 0);
  ASSERT_GE(srv, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  ASSERT_EQ(::bind(srv, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)), 0);
  ASSERT_EQ(::listen(srv, 1), 0);
  socklen_t len = sizeof(addr);
  ::getsockname(srv, reinterpret_cast<sockaddr*>(&addr), &len);
  const int port = ntohs(addr.sin_port);

  std::thread server([srv] {
    const int c = ::accept(srv, nullptr, nullptr);
    std::string buf;
    char ch = 0;
    int answered = 0;
    while (answered < 2 && ::read(c, &ch, 1) == 1) {
      if (ch != '\n') {
        buf += ch;
        continue;
      }
      const auto req = nlohmann::json::parse(buf);
      buf.clear();
      const auto text = req.at("text").get<std::string>();
      const std::string resp =
          nlohmann::json{{"id", req.at("id")}, {"score", text.size() > 10 ? 0.8 : 0.2}}.dump() + "\n";
      static_cast<void>(::write(c, resp.data(), resp.size()));
      ++answered;
    }
    ::close(c);
  });
  {
    detectors::ExternalDetector det(detectors::open_channel("tcp:127.0.0.1:" + std::to_string(port)));
    EXPECT_DOUBLE_EQ(det.evaluate({"a", "long", "sentence", "here"}), 0.8);
    EXPECT_DOUBLE_EQ(det.evaluate({"hi"}), 0.2);
  }
  server.join();
  ::close(srv);
}
