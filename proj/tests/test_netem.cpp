#include <gtest/gtest.h>

#include "common.hpp"
#include "fedkit/netem/link.hpp"

using namespace fedkit;
using namespace fedkit::netem;

namespace {

SimTime ms(std::int64_t v) { return SimTime{v * 1'000'000}; }

LinkModel fixed(SimTime d) {
  LinkModel m;
  m.base_delay = d;
  return m;
}

}  // namespace

TEST(Schedule, BaseDelayIsAdditive) {
  LinkScheduler s(fixed(ms(50)), "a->b", 1);
  const auto slot = s.schedule(ms(100));
  ASSERT_TRUE(slot);
  EXPECT_EQ(slot->deliver_time, ms(150));
}

TEST(Schedule, CertainLossDropsEverything) {
  LinkScheduler s({ms(5), Jitter::uniform(ms(2)), 1.0}, "a->b", 1);
  for (int i = 0; i < 100; ++i) EXPECT_FALSE(s.schedule(ms(i)));
  EXPECT_EQ(s.draws(), 100u);
}

TEST(Schedule, SameSeedSameSequence) {
  const LinkModel m{ms(20), Jitter::normal(ms(4)), 0.1};
  LinkScheduler a(m, "siteA->siteB", 9), b(m, "siteA->siteB", 9), c(m, "siteB->siteA", 9);
  bool differs = false;
  for (int i = 0; i < 500; ++i) {
    const auto x = a.schedule(ms(i)), y = b.schedule(ms(i)), z = c.schedule(ms(i));
    ASSERT_EQ(x.has_value(), y.has_value());
    if (x) {
      EXPECT_EQ(x->deliver_time, y->deliver_time);
    }
    if (x.has_value() != z.has_value() || (x && z && x->deliver_time != z->deliver_time)) differs = true;
  }
  EXPECT_TRUE(differs) << "link id must key its own stream";
}

TEST(Schedule, DelayIsNeverNegative) {
  LinkScheduler s({ms(1), Jitter::uniform(ms(5))}, "l", 2);
  for (int i = 0; i < 1000; ++i) EXPECT_GE(s.schedule(ms(10))->deliver_time, ms(10));
}

TEST(Schedule, EmpiricalLossRate) {
  for (double p : {0.01, 0.1, 0.5}) {
    LinkScheduler s({ms(1), Jitter::none(), p}, "loss", 11);
    int lost = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) lost += !s.schedule(SimTime{0});
    EXPECT_NEAR(static_cast<double>(lost) / n, p, 0.01) << p;
  }
}

TEST(Schedule, MeanDelayForSymmetricJitter) {
  for (const auto j : {Jitter::uniform(ms(20)), Jitter::normal(ms(10))}) {
    LinkScheduler s({ms(50), j}, "mean", 3);
    double sum = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) sum += static_cast<double>(s.schedule(SimTime{0})->deliver_time.count());
    EXPECT_NEAR(sum / n, static_cast<double>(ms(50).count()), 0.02 * static_cast<double>(ms(50).count()));
  }
}

TEST(Schedule, NonOvertakingPreservesSendOrder) {
  Link<int> link({ms(50), Jitter::uniform(ms(40)), 0.0, 0, true}, "fifo", 5);
  for (int i = 0; i < 1000; ++i) link.send(i, ms(i));
  const auto out = link.deliver_due(ms(10000));
  ASSERT_EQ(out.size(), 1000u);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(out[static_cast<std::size_t>(i)], i);
}

TEST(Schedule, JitterCanReorderWithoutTheFlag) {
  Link<int> link({ms(50), Jitter::uniform(ms(40))}, "reorder", 5);
  for (int i = 0; i < 1000; ++i) link.send(i, ms(i));
  const auto out = link.deliver_due(ms(10000));
  EXPECT_FALSE(std::is_sorted(out.begin(), out.end()));
}

TEST(DeliverDue, Threshold) {
  DeliveryQueue<std::string> q;
  q.push({"a", ms(10), 0});
  q.push({"b", ms(12), 1});
  EXPECT_EQ(q.deliver_due(ms(11)), std::vector<std::string>{"a"});
  EXPECT_EQ(q.next_time(), ms(12));
}

TEST(DeliverDue, TiesOrderedByDrawIndex) {
  DeliveryQueue<std::string> q;
  q.push({"second", ms(10), 7});
  q.push({"first", ms(10), 3});
  EXPECT_EQ(q.deliver_due(ms(10)), (std::vector<std::string>{"first", "second"}));
}

TEST(DeliverDue, EmptyQueue) {
  DeliveryQueue<int> q;
  EXPECT_TRUE(q.deliver_due(ms(100)).empty());
  EXPECT_FALSE(q.next_time());
}

TEST(LinkModel, CheckRejectsBadValues) {
  EXPECT_FEDKIT_ERROR(fixed(ms(-1)).check(), ConfigError);
  EXPECT_FEDKIT_ERROR((LinkModel{ms(1), {}, 1.5}.check()), ConfigError);
  EXPECT_EQ((LinkModel{ms(15), Jitter::uniform(ms(5))}.worst_case_delay()), ms(20));
  EXPECT_EQ((LinkModel{ms(15), Jitter::normal(ms(2))}.worst_case_delay()), ms(21));
}
