#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "resil/perception.hpp"

using namespace resil;

namespace {

// Plain reference: sort, median, deviations, sort again.
std::vector<bool> outliers_ref(std::vector<double> w) {
  std::vector<bool> mask(w.size(), false);
  if (w.size() < 5) return mask;
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  const double med = median(w);
  std::vector<double> dev;
  for (double x : w) dev.push_back(std::abs(x - med));
  const double cut = 3.0 * 1.4826 * median(dev);
  for (std::size_t i = 0; i < w.size(); ++i) mask[i] = std::abs(w[i] - med) > cut;
  return mask;
}

}  // namespace

TEST(Vote, MedianOfReplicas) {
  std::vector<double> odd{3.0, 100.0, 1.0};
  EXPECT_EQ(redundancy_vote(odd), 3.0);
  std::vector<double> even{4.0, 1.0, 3.0, 2.0};
  EXPECT_EQ(redundancy_vote(even), 2.5);
  EXPECT_THROW(redundancy_vote(std::vector<double>{}), DomainError);
}

TEST(Outliers, ShortWindowPassesThrough) {
  std::vector<double> w{0, 0, 0, 100};
  auto m = detect_outliers(w);
  EXPECT_TRUE(std::none_of(m.begin(), m.end(), [](bool b) { return b; }));
}

TEST(Outliers, SpikeFlagged) {
  std::vector<double> w{0.50, 0.51, 0.49, 0.50, 0.52, 0.48, 0.95};
  auto m = detect_outliers(w);
  EXPECT_TRUE(m.back());
  EXPECT_EQ(std::count(m.begin(), m.end(), true), 1);
}

TEST(Outliers, MatchesReference) {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> nd(0.5, 0.05);
  for (int t = 0; t < 300; ++t) {
    std::vector<double> w(std::uniform_int_distribution<int>(1, 60)(gen));
    for (auto& x : w) x = std::bernoulli_distribution(0.05)(gen) ? 1.0 : nd(gen);
    EXPECT_EQ(detect_outliers(w), outliers_ref(w));
  }
}

TEST(Outliers, SortedVariantIsBitIdentical) {
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 300; ++t) {
    std::vector<double> w(std::uniform_int_distribution<int>(5, 80)(gen));
    for (auto& x : w) x = std::round(u(gen) * 20) / 20;  // plenty of ties
    std::vector<double> scratch;
    auto a = detail::mad_cutoff(w, scratch);
    std::sort(w.begin(), w.end());
    auto b = detail::mad_cutoff_sorted(w);
    EXPECT_EQ(a.first, b.first);
    EXPECT_EQ(a.second, b.second);
  }
}

TEST(Buffer, WindowAndNormalization) {
  TimeSeriesBuffer buf(3);
  buf.add_stream("s", 0.0, 10.0);
  EXPECT_THROW(buf.add_stream("s", 0.0, 1.0), DomainError);
  EXPECT_THROW(buf.add_stream("t", 1.0, 1.0), DomainError);
  EXPECT_THROW(buf.index("nope"), StreamError);
  EXPECT_EQ(buf.normalize(0, 5.0), 0.5);
  EXPECT_EQ(buf.normalize(0, -5.0), 0.0);
  EXPECT_EQ(buf.normalize(0, 50.0), 1.0);
  for (int i = 0; i < 5; ++i) buf.push(0, {i * 0.1, i == 3});
  EXPECT_EQ(buf.size(0), 3u);
  EXPECT_EQ(buf.clean_values(0), (std::vector<double>{0.2, 0.4}));
  EXPECT_EQ(buf.sorted(0), (std::vector<double>{0.2, 0.30000000000000004, 0.4}));
}

TEST(Preprocess, VotesNormalizesAndFlags) {
  TimeSeriesBuffer buf(20);
  buf.add_stream("a", 0.0, 100.0);
  buf.add_stream("b", 0.0, 1.0);
  for (int t = 0; t < 10; ++t) {
    std::vector<TelemetrySample> raw{{"a", t * 0.1, 50.0, 0}, {"a", t * 0.1, 51.0, 1}, {"a", t * 0.1, 99.0, 2}};
    auto out = preprocess(raw, buf);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].stream, 0u);
    EXPECT_NEAR(out[0].value, 0.51, 1e-12);
    EXPECT_FALSE(out[0].flagged);
  }
  std::vector<TelemetrySample> spike{{"a", 1.0, 95.0, 0}, {"b", 1.0, 0.5, 0}};
  auto out = preprocess(spike, buf);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_TRUE(out[0].flagged);
  EXPECT_EQ(buf.clean_values(0).size(), 10u);
  std::vector<TelemetrySample> bad{{"zz", 0.0, 1.0, 0}};
  EXPECT_THROW(preprocess(bad, buf), StreamError);
}

TEST(Preprocess, AgreesWithBatchDetector) {
  // the streaming flag equals detect_outliers on the window after the push
  std::mt19937_64 gen(12);
  std::normal_distribution<double> nd(0.4, 0.03);
  TimeSeriesBuffer buf(25);
  buf.add_stream("s", 0.0, 1.0);
  for (int t = 0; t < 400; ++t) {
    const double v = std::bernoulli_distribution(0.04)(gen) ? 0.9 : nd(gen);
    std::vector<TelemetrySample> raw{{"s", t * 0.1, v, 0}};
    auto out = preprocess(raw, buf);
    std::vector<double> w;
    for (const auto& b : buf.values(0)) w.push_back(b.value);
    EXPECT_EQ(out[0].flagged, detect_outliers(w).back()) << "tick " << t;
  }
}
