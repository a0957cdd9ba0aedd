#include "rmflow/metrics.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

namespace rmflow {

namespace {

constexpr double kOutlierAbs = 3.0;   // px
constexpr double kOutlierRel = 0.05;  // fraction of ground-truth magnitude

struct MeanAcc {
  double sum = 0.0;
  long n = 0;
  void add(double v) {
    sum += v;
    ++n;
  }
  std::optional<double> mean() const {
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
  }
};

struct RateAcc {
  long hits = 0;
  long n = 0;
  void add(bool hit) {
    if (hit) ++hits;
    ++n;
  }
  std::optional<double> percent() const {
    if (n == 0) return std::nullopt;
    return 100.0 * static_cast<double>(hits) / static_cast<double>(n);
  }
};

}  // namespace

bool flow_outlier(double pred_u, double pred_v, double gt_u, double gt_v) {
  const double err = std::hypot(pred_u - gt_u, pred_v - gt_v);
  const double mag = std::hypot(gt_u, gt_v);
  return err > kOutlierAbs && err > kOutlierRel * mag;
}

bool disparity_outlier(double pred, double gt) {
  const double err = std::abs(pred - gt);
  return err > kOutlierAbs && err > kOutlierRel * std::abs(gt);
}

FlowMetrics eval_flow(const Field& pred, const Field& gt, const Field& valid,
                      const Field* occ, const Field* fg) {
  require_same_shape(pred, gt, "eval_flow");
  require_same_shape(pred, valid, "eval_flow");
  require_channels(pred, 2, "eval_flow pred");
  require_channels(gt, 2, "eval_flow gt");
  require_channels(valid, 1, "eval_flow valid");
  if (occ) {
    require_same_shape(pred, *occ, "eval_flow occ");
    require_channels(*occ, 1, "eval_flow occ");
  }
  if (fg) {
    require_same_shape(pred, *fg, "eval_flow fg");
    require_channels(*fg, 1, "eval_flow fg");
  }

  MeanAcc epe_all, epe_noc, epe_occ;
  RateAcc fl_all, fl_noc, fl_bg, fl_fg;

  for (int y = 0; y < pred.height(); ++y) {
    for (int x = 0; x < pred.width(); ++x) {
      if (valid.at(y, x) == 0.0) continue;
      const double pu = pred.at(y, x, 0);
      const double pv = pred.at(y, x, 1);
      const double gu = gt.at(y, x, 0);
      const double gv = gt.at(y, x, 1);
      const double err = std::hypot(pu - gu, pv - gv);
      const bool outlier = flow_outlier(pu, pv, gu, gv);

      epe_all.add(err);
      fl_all.add(outlier);
      if (occ) {
        if (occ->at(y, x) == 0.0) {
          epe_noc.add(err);
          fl_noc.add(outlier);
        } else {
          epe_occ.add(err);
        }
      }
      if (fg) {
        if (fg->at(y, x) == 0.0) {
          fl_bg.add(outlier);
        } else {
          fl_fg.add(outlier);
        }
      }
    }
  }

  FlowMetrics m;
  m.epe_all = epe_all.mean();
  m.epe_noc = epe_noc.mean();
  m.epe_occ = epe_occ.mean();
  m.fl_all = fl_all.percent();
  m.fl_noc = fl_noc.percent();
  m.fl_bg = fl_bg.percent();
  m.fl_fg = fl_fg.percent();
  m.n_all = epe_all.n;
  m.n_noc = epe_noc.n;
  m.n_occ = epe_occ.n;
  m.n_bg = fl_bg.n;
  m.n_fg = fl_fg.n;
  return m;
}

std::optional<DepthMetrics> eval_depth(const Field& pred, const Field& gt,
                                       const Field& valid, double cap) {
  require_same_shape(pred, gt, "eval_depth");
  require_same_shape(pred, valid, "eval_depth");
  require_channels(pred, 1, "eval_depth pred");
  require_channels(gt, 1, "eval_depth gt");
  require_channels(valid, 1, "eval_depth valid");
  if (!(cap > 0.0)) {
    throw Error(ErrorKind::parameter, "depth cap must be positive");
  }

  DepthMetrics m;
  double abs_rel = 0.0, sq_rel = 0.0, sq = 0.0, sq_log = 0.0;
  long d1 = 0, d2 = 0, d3 = 0, n = 0;

  for (int y = 0; y < pred.height(); ++y) {
    for (int x = 0; x < pred.width(); ++x) {
      if (valid.at(y, x) == 0.0) continue;
      const double g = gt.at(y, x);
      if (!(g > 0.0) || g > cap) continue;
      const double p = std::clamp(pred.at(y, x), 1e-3, cap);
      const double diff = p - g;
      abs_rel += std::abs(diff) / g;
      sq_rel += diff * diff / g;
      sq += diff * diff;
      const double dlog = std::log(p) - std::log(g);
      sq_log += dlog * dlog;
      const double ratio = std::max(p / g, g / p);
      if (ratio < 1.25) ++d1;
      if (ratio < 1.25 * 1.25) ++d2;
      if (ratio < 1.25 * 1.25 * 1.25) ++d3;
      ++n;
    }
  }

  if (n == 0) return std::nullopt;
  const double dn = static_cast<double>(n);
  m.abs_rel = abs_rel / dn;
  m.sq_rel = sq_rel / dn;
  m.rmse = std::sqrt(sq / dn);
  m.rmse_log = std::sqrt(sq_log / dn);
  m.delta1 = static_cast<double>(d1) / dn;
  m.delta2 = static_cast<double>(d2) / dn;
  m.delta3 = static_cast<double>(d3) / dn;
  m.n = n;
  return m;
}

SceneFlowMetrics eval_scene_flow(const Field& d1_pred, const Field& d1_gt,
                                 const Field& d2_pred, const Field& d2_gt,
                                 const Field& flow_pred, const Field& flow_gt,
                                 const Field& valid, const Field* fg) {
  require_same_shape(d1_pred, d1_gt, "eval_scene_flow");
  require_same_shape(d1_pred, d2_pred, "eval_scene_flow");
  require_same_shape(d1_pred, d2_gt, "eval_scene_flow");
  require_same_shape(d1_pred, flow_pred, "eval_scene_flow");
  require_same_shape(d1_pred, flow_gt, "eval_scene_flow");
  require_same_shape(d1_pred, valid, "eval_scene_flow");
  require_channels(d1_pred, 1, "eval_scene_flow d1_pred");
  require_channels(d1_gt, 1, "eval_scene_flow d1_gt");
  require_channels(d2_pred, 1, "eval_scene_flow d2_pred");
  require_channels(d2_gt, 1, "eval_scene_flow d2_gt");
  require_channels(flow_pred, 2, "eval_scene_flow flow_pred");
  require_channels(flow_gt, 2, "eval_scene_flow flow_gt");
  require_channels(valid, 1, "eval_scene_flow valid");
  if (fg) {
    require_same_shape(d1_pred, *fg, "eval_scene_flow fg");
    require_channels(*fg, 1, "eval_scene_flow fg");
  }

  RateAcc d1_all, d2_all, fl_all, sf_all;
  RateAcc d1_bg, d2_bg, fl_bg, sf_bg;
  RateAcc d1_fg, d2_fg, fl_fg, sf_fg;

  for (int y = 0; y < d1_pred.height(); ++y) {
    for (int x = 0; x < d1_pred.width(); ++x) {
      if (valid.at(y, x) == 0.0) continue;
      const bool out_d1 = disparity_outlier(d1_pred.at(y, x), d1_gt.at(y, x));
      const bool out_d2 = disparity_outlier(d2_pred.at(y, x), d2_gt.at(y, x));
      const bool out_fl =
          flow_outlier(flow_pred.at(y, x, 0), flow_pred.at(y, x, 1),
                       flow_gt.at(y, x, 0), flow_gt.at(y, x, 1));
      const bool out_sf = out_d1 || out_d2 || out_fl;
      d1_all.add(out_d1);
      d2_all.add(out_d2);
      fl_all.add(out_fl);
      sf_all.add(out_sf);
      if (fg) {
        if (fg->at(y, x) == 0.0) {
          d1_bg.add(out_d1);
          d2_bg.add(out_d2);
          fl_bg.add(out_fl);
          sf_bg.add(out_sf);
        } else {
          d1_fg.add(out_d1);
          d2_fg.add(out_d2);
          fl_fg.add(out_fl);
          sf_fg.add(out_sf);
        }
      }
    }
  }

  auto pack = [](const RateAcc& d1a, const RateAcc& d2a, const RateAcc& fla,
                 const RateAcc& sfa) {
    SceneFlowSplit s;
    s.d1 = d1a.percent();
    s.d2 = d2a.percent();
    s.fl = fla.percent();
    s.sf = sfa.percent();
    s.n = d1a.n;
    return s;
  };

  SceneFlowMetrics m;
  m.all = pack(d1_all, d2_all, fl_all, sf_all);
  m.bg = pack(d1_bg, d2_bg, fl_bg, sf_bg);
  m.fg = pack(d1_fg, d2_fg, fl_fg, sf_fg);
  return m;
}

namespace {

void emit(std::ostringstream& os, const char* key,
          const std::optional<double>& value) {
  if (value) os << key << ": " << *value << "\n";
}

void put(nlohmann::json& j, const char* key,
         const std::optional<double>& value) {
  if (value) j[key] = *value;
}

nlohmann::json split_json(const SceneFlowSplit& s) {
  nlohmann::json j = nlohmann::json::object();
  put(j, "d1", s.d1);
  put(j, "d2", s.d2);
  put(j, "fl", s.fl);
  put(j, "sf", s.sf);
  j["n"] = s.n;
  return j;
}

}  // namespace

std::string report_text(const EvalReport& report) {
  std::ostringstream os;
  os.precision(17);
  if (report.flow) {
    const FlowMetrics& f = *report.flow;
    emit(os, "flow.epe_all", f.epe_all);
    emit(os, "flow.epe_noc", f.epe_noc);
    emit(os, "flow.epe_occ", f.epe_occ);
    emit(os, "flow.fl_all", f.fl_all);
    emit(os, "flow.fl_noc", f.fl_noc);
    emit(os, "flow.fl_bg", f.fl_bg);
    emit(os, "flow.fl_fg", f.fl_fg);
    os << "flow.n_all: " << f.n_all << "\n";
  }
  if (report.depth) {
    const DepthMetrics& d = *report.depth;
    os << "depth.abs_rel: " << d.abs_rel << "\n"
       << "depth.sq_rel: " << d.sq_rel << "\n"
       << "depth.rmse: " << d.rmse << "\n"
       << "depth.rmse_log: " << d.rmse_log << "\n"
       << "depth.delta1: " << d.delta1 << "\n"
       << "depth.delta2: " << d.delta2 << "\n"
       << "depth.delta3: " << d.delta3 << "\n"
       << "depth.n: " << d.n << "\n";
  }
  if (report.scene_flow) {
    const SceneFlowMetrics& s = *report.scene_flow;
    auto split = [&](const char* name, const SceneFlowSplit& sp) {
      std::string prefix = std::string("scene_flow.") + name + ".";
      emit(os, (prefix + "d1").c_str(), sp.d1);
      emit(os, (prefix + "d2").c_str(), sp.d2);
      emit(os, (prefix + "fl").c_str(), sp.fl);
      emit(os, (prefix + "sf").c_str(), sp.sf);
      os << prefix << "n: " << sp.n << "\n";
    };
    split("all", s.all);
    split("bg", s.bg);
    split("fg", s.fg);
  }
  return os.str();
}

std::string report_json(const EvalReport& report) {
  nlohmann::json j = nlohmann::json::object();
  if (report.flow) {
    const FlowMetrics& f = *report.flow;
    nlohmann::json jf = nlohmann::json::object();
    put(jf, "epe_all", f.epe_all);
    put(jf, "epe_noc", f.epe_noc);
    put(jf, "epe_occ", f.epe_occ);
    put(jf, "fl_all", f.fl_all);
    put(jf, "fl_noc", f.fl_noc);
    put(jf, "fl_bg", f.fl_bg);
    put(jf, "fl_fg", f.fl_fg);
    jf["n_all"] = f.n_all;
    jf["n_noc"] = f.n_noc;
    jf["n_occ"] = f.n_occ;
    jf["n_bg"] = f.n_bg;
    jf["n_fg"] = f.n_fg;
    j["flow"] = jf;
  }
  if (report.depth) {
    const DepthMetrics& d = *report.depth;
    j["depth"] = {{"abs_rel", d.abs_rel}, {"sq_rel", d.sq_rel},
                  {"rmse", d.rmse},       {"rmse_log", d.rmse_log},
                  {"delta1", d.delta1},   {"delta2", d.delta2},
                  {"delta3", d.delta3},   {"n", d.n}};
  }
  if (report.scene_flow) {
    j["scene_flow"] = {{"all", split_json(report.scene_flow->all)},
                       {"bg", split_json(report.scene_flow->bg)},
                       {"fg", split_json(report.scene_flow->fg)}};
  }
  return j.dump(2) + "\n";
}

}  // namespace rmflow
