// Evaluation metrics against straight-line reference implementations and
// hand-worked values, including the outlier rule boundaries and the empty
// split conventions.

#include <cmath>
#include <optional>
#include <random>

#include <doctest.h>

#include <json.hpp>

#include "rmflow/error.hpp"
#include "rmflow/metrics.hpp"

using namespace rmflow;

namespace {

struct ReferenceFlow {
  double epe_sum = 0.0;
  long n = 0;
  long outliers = 0;
};

bool ref_flow_outlier(double pu, double pv, double gu, double gv) {
  const double err = std::hypot(pu - gu, pv - gv);
  const double mag = std::hypot(gu, gv);
  return err > 3.0 && err > 0.05 * mag;
}

bool ref_disp_outlier(double p, double g) {
  const double err = std::abs(p - g);
  return err > 3.0 && err > 0.05 * std::abs(g);
}

}  // namespace

TEST_CASE("endpoint error of a (3,4) mistake is 5 px") {
  Field pred(1, 1, 2, FieldTag::flow);
  pred.at(0, 0, 0) = 3.0;
  pred.at(0, 0, 1) = 4.0;
  const Field gt(1, 1, 2, FieldTag::flow, 0.0);
  const Field valid = make_mask(1, 1, 1.0);
  const FlowMetrics m = eval_flow(pred, gt, valid);
  REQUIRE(m.epe_all.has_value());
  CHECK(*m.epe_all == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(m.n_all == 1);
  // 5 > 3 and 5 > 0.05 * 0: outlier.
  REQUIRE(m.fl_all.has_value());
  CHECK(*m.fl_all == doctest::Approx(100.0));
}

TEST_CASE("outlier rule boundaries: both conditions must hold strictly") {
  // Error exactly 3 px: not an outlier regardless of magnitude.
  CHECK_FALSE(flow_outlier(3.0, 0.0, 0.0, 0.0));
  CHECK(flow_outlier(3.0 + 1e-9, 0.0, 0.0, 0.0));
  // Large ground truth: 4 px error on an 100 px flow is 4% < 5%.
  CHECK_FALSE(flow_outlier(104.0, 0.0, 100.0, 0.0));
  // 5% exactly is not enough.
  CHECK_FALSE(flow_outlier(105.0, 0.0, 100.0, 0.0));
  CHECK(flow_outlier(105.1, 0.0, 100.0, 0.0));

  CHECK_FALSE(disparity_outlier(-53.0, -50.0));
  CHECK(disparity_outlier(-53.1, -50.0));
  CHECK_FALSE(disparity_outlier(-104.0, -100.0));
  CHECK(disparity_outlier(-105.5, -100.0));
}

TEST_CASE("flow metrics match brute force on random fields with splits") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  std::bernoulli_distribution coin(0.5);
  std::bernoulli_distribution sparse(0.3);

  for (int trial = 0; trial < 100; ++trial) {
    const int h = 8, w = 8;
    Field pred(h, w, 2, FieldTag::flow), gt(h, w, 2, FieldTag::flow);
    Field valid = make_mask(h, w), occ = make_mask(h, w), fg = make_mask(h, w);
    for (double& v : pred.values()) v = u(rng);
    for (double& v : gt.values()) v = u(rng);
    for (double& v : valid.values()) v = sparse(rng) ? 0.0 : 1.0;
    for (double& v : occ.values()) v = coin(rng) ? 1.0 : 0.0;
    for (double& v : fg.values()) v = coin(rng) ? 1.0 : 0.0;

    const FlowMetrics m = eval_flow(pred, gt, valid, &occ, &fg);

    ReferenceFlow all, noc, occd, bg, fgd;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (valid.at(y, x) == 0.0) continue;
        const double pu = pred.at(y, x, 0), pv = pred.at(y, x, 1);
        const double gu = gt.at(y, x, 0), gv = gt.at(y, x, 1);
        const double err = std::hypot(pu - gu, pv - gv);
        const bool out = ref_flow_outlier(pu, pv, gu, gv);
        auto add = [&](ReferenceFlow& r) {
          r.epe_sum += err;
          r.n += 1;
          r.outliers += out;
        };
        add(all);
        add(occ.at(y, x) != 0.0 ? occd : noc);
        add(fg.at(y, x) != 0.0 ? fgd : bg);
      }
    }

    auto check_rate = [&](const std::optional<double>& got,
                          const ReferenceFlow& r) {
      if (r.n == 0) {
        CHECK_FALSE(got.has_value());
      } else {
        REQUIRE(got.has_value());
        CHECK(std::abs(*got - 100.0 * r.outliers / r.n) < 1e-12);
      }
    };
    if (all.n == 0) {
      CHECK_FALSE(m.epe_all.has_value());
    } else {
      REQUIRE(m.epe_all.has_value());
      CHECK(std::abs(*m.epe_all - all.epe_sum / all.n) < 1e-12);
    }
    if (noc.n > 0) {
      REQUIRE(m.epe_noc.has_value());
      CHECK(std::abs(*m.epe_noc - noc.epe_sum / noc.n) < 1e-12);
    }
    if (occd.n > 0) {
      REQUIRE(m.epe_occ.has_value());
      CHECK(std::abs(*m.epe_occ - occd.epe_sum / occd.n) < 1e-12);
    }
    check_rate(m.fl_all, all);
    check_rate(m.fl_noc, noc);
    check_rate(m.fl_bg, bg);
    check_rate(m.fl_fg, fgd);
    CHECK(m.n_all == all.n);
    CHECK(m.n_noc == noc.n);
    CHECK(m.n_occ == occd.n);
    CHECK(m.n_bg == bg.n);
    CHECK(m.n_fg == fgd.n);
  }
}

TEST_CASE("empty splits are absent, not zero") {
  Field pred(2, 2, 2, FieldTag::flow, 0.0);
  const Field gt = pred;
  const Field none = make_mask(2, 2, 0.0);
  const FlowMetrics m = eval_flow(pred, gt, none);
  CHECK_FALSE(m.epe_all.has_value());
  CHECK_FALSE(m.fl_all.has_value());
  CHECK(m.n_all == 0);

  // All pixels occluded: the noc split is absent.
  const Field valid = make_mask(2, 2, 1.0);
  const Field occ = make_mask(2, 2, 1.0);
  const FlowMetrics m2 = eval_flow(pred, gt, valid, &occ);
  CHECK_FALSE(m2.epe_noc.has_value());
  REQUIRE(m2.epe_occ.has_value());
  CHECK(m2.n_noc == 0);
}

TEST_CASE("depth metrics on a uniform 1.3x overestimate, by hand") {
  // pred = 1.3 * gt: abs_rel = 0.3, sq_rel = 0.09 * g, ratio 1.3 so
  // delta1 (<1.25) fails, delta2 (<1.5625) holds.
  const int h = 4, w = 4;
  Field gt(h, w, 1, FieldTag::depth);
  Field pred(h, w, 1, FieldTag::depth);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      gt.at(y, x) = 2.0 + y + 0.25 * x;
      pred.at(y, x) = 1.3 * gt.at(y, x);
    }
  }
  const auto m = eval_depth(pred, gt, make_mask(h, w, 1.0));
  REQUIRE(m.has_value());
  CHECK(m->abs_rel == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(m->delta1 == 0.0);
  CHECK(m->delta2 == 1.0);
  CHECK(m->delta3 == 1.0);
  CHECK(m->n == h * w);

  double sq = 0.0, rmse = 0.0, rl = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double g = gt.at(y, x);
      sq += (0.3 * g) * (0.3 * g) / g;
      rmse += (0.3 * g) * (0.3 * g);
      rl += std::log(1.3) * std::log(1.3);
    }
  }
  CHECK(m->sq_rel == doctest::Approx(sq / (h * w)).epsilon(1e-12));
  CHECK(m->rmse == doctest::Approx(std::sqrt(rmse / (h * w))).epsilon(1e-12));
  CHECK(m->rmse_log == doctest::Approx(std::sqrt(rl / (h * w))).epsilon(1e-12));
}

TEST_CASE("depth domain rules: cap, clamp, and empty result") {
  Field gt(1, 4, 1, FieldTag::depth);
  Field pred(1, 4, 1, FieldTag::depth);
  gt.at(0, 0) = 100.0;  // beyond the 80 m cap: excluded
  gt.at(0, 1) = 0.0;    // non-positive: excluded
  gt.at(0, 2) = 40.0;
  gt.at(0, 3) = 10.0;
  pred.at(0, 2) = 200.0;  // clamped to 80
  pred.at(0, 3) = 0.0;    // clamped to 1e-3
  const auto m = eval_depth(pred, gt, make_mask(1, 4, 1.0));
  REQUIRE(m.has_value());
  CHECK(m->n == 2);
  // abs_rel terms: |80-40|/40 = 1 and |1e-3-10|/10.
  CHECK(m->abs_rel ==
        doctest::Approx((1.0 + (10.0 - 1e-3) / 10.0) / 2.0).epsilon(1e-12));

  const auto empty = eval_depth(pred, gt, make_mask(1, 4, 0.0));
  CHECK_FALSE(empty.has_value());
}

TEST_CASE("scene flow outliers are the union of the three tests") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  std::uniform_real_distribution<double> ud(-60.0, -5.0);
  std::bernoulli_distribution coin(0.5);
  std::bernoulli_distribution sparse(0.2);

  for (int trial = 0; trial < 100; ++trial) {
    const int h = 8, w = 8;
    Field d1p(h, w, 1, FieldTag::disparity), d1g(h, w, 1, FieldTag::disparity);
    Field d2p(h, w, 1, FieldTag::disparity), d2g(h, w, 1, FieldTag::disparity);
    Field fp(h, w, 2, FieldTag::flow), fg_flow(h, w, 2, FieldTag::flow);
    Field valid = make_mask(h, w), fg = make_mask(h, w);
    for (double& v : d1p.values()) v = ud(rng) + (coin(rng) ? 4.0 : 0.0);
    for (double& v : d1g.values()) v = ud(rng);
    for (double& v : d2p.values()) v = ud(rng) + (coin(rng) ? 4.0 : 0.0);
    for (double& v : d2g.values()) v = ud(rng);
    for (double& v : fp.values()) v = u(rng);
    for (double& v : fg_flow.values()) v = u(rng);
    for (double& v : valid.values()) v = sparse(rng) ? 0.0 : 1.0;
    for (double& v : fg.values()) v = coin(rng) ? 1.0 : 0.0;

    const SceneFlowMetrics m =
        eval_scene_flow(d1p, d1g, d2p, d2g, fp, fg_flow, valid, &fg);

    long n[3] = {0, 0, 0};
    long od1[3] = {0, 0, 0}, od2[3] = {0, 0, 0}, ofl[3] = {0, 0, 0},
         osf[3] = {0, 0, 0};
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (valid.at(y, x) == 0.0) continue;
        const bool b1 = ref_disp_outlier(d1p.at(y, x), d1g.at(y, x));
        const bool b2 = ref_disp_outlier(d2p.at(y, x), d2g.at(y, x));
        const bool bf = ref_flow_outlier(fp.at(y, x, 0), fp.at(y, x, 1),
                                         fg_flow.at(y, x, 0),
                                         fg_flow.at(y, x, 1));
        const bool bs = b1 || b2 || bf;
        const int split = fg.at(y, x) != 0.0 ? 2 : 1;
        for (int s : {0, split}) {
          n[s] += 1;
          od1[s] += b1;
          od2[s] += b2;
          ofl[s] += bf;
          osf[s] += bs;
        }
      }
    }
    const SceneFlowSplit* splits[3] = {&m.all, &m.bg, &m.fg};
    for (int s = 0; s < 3; ++s) {
      CHECK(splits[s]->n == n[s]);
      if (n[s] == 0) {
        CHECK_FALSE(splits[s]->d1.has_value());
        CHECK_FALSE(splits[s]->sf.has_value());
        continue;
      }
      CHECK(std::abs(*splits[s]->d1 - 100.0 * od1[s] / n[s]) < 1e-12);
      CHECK(std::abs(*splits[s]->d2 - 100.0 * od2[s] / n[s]) < 1e-12);
      CHECK(std::abs(*splits[s]->fl - 100.0 * ofl[s] / n[s]) < 1e-12);
      CHECK(std::abs(*splits[s]->sf - 100.0 * osf[s] / n[s]) < 1e-12);
    }
  }
}

TEST_CASE("perfect predictions score zero everywhere") {
  const int h = 6, w = 6;
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  Field flow(h, w, 2, FieldTag::flow);
  for (double& v : flow.values()) v = u(rng);
  Field disp(h, w, 1, FieldTag::disparity, -20.0);
  const Field valid = make_mask(h, w, 1.0);

  const FlowMetrics fm = eval_flow(flow, flow, valid);
  CHECK(*fm.epe_all == 0.0);
  CHECK(*fm.fl_all == 0.0);

  const SceneFlowMetrics sm =
      eval_scene_flow(disp, disp, disp, disp, flow, flow, valid);
  CHECK(*sm.all.sf == 0.0);
  CHECK(sm.fg.n == 0);
  CHECK_FALSE(sm.fg.sf.has_value());
}

TEST_CASE("text and JSON reports carry the same numbers") {
  Field pred(1, 2, 2, FieldTag::flow, 1.0);
  Field gt(1, 2, 2, FieldTag::flow, 0.0);
  EvalReport report;
  report.flow = eval_flow(pred, gt, make_mask(1, 2, 1.0));

  const std::string text = report_text(report);
  CHECK(text.find("flow.epe_all:") != std::string::npos);
  CHECK(text.find("flow.n_all: 2") != std::string::npos);
  // Absent metrics are omitted entirely.
  CHECK(text.find("fl_fg") == std::string::npos);
  CHECK(text.find("depth.") == std::string::npos);

  const auto j = nlohmann::json::parse(report_json(report));
  REQUIRE(j.contains("flow"));
  CHECK(j["flow"]["epe_all"].get<double>() ==
        doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  CHECK(j["flow"]["n_all"].get<long>() == 2);
  CHECK_FALSE(j["flow"].contains("fl_fg"));
  CHECK_FALSE(j.contains("depth"));
}

TEST_CASE("metric inputs must agree in shape") {
  Field pred(2, 2, 2, FieldTag::flow);
  Field gt(3, 2, 2, FieldTag::flow);
  CHECK_THROWS_AS(eval_flow(pred, gt, make_mask(2, 2, 1.0)), Error);
}
