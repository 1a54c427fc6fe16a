#include "zsad/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace zsad {

namespace {

std::string fixed(double v, int digits) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(digits) << v;
  return o.str();
}

std::string full(double v) {
  std::ostringstream o;
  o << std::setprecision(17) << v;
  return o.str();
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

// Plot area inside a fixed 480x320 canvas.
constexpr double kW = 480, kH = 320, kL = 56, kR = 16, kT = 28, kB = 40;

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kL + (x - x0) / (x1 - x0) * (kW - kL - kR); }
  double py(double y) const { return kH - kB - (y - y0) / (y1 - y0) * (kH - kT - kB); }
};

std::string svg_open(const Frame& f, const std::string& title, const std::string& xl, const std::string& yl) {
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\" viewBox=\"0 0 " << kW
    << ' ' << kH << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << kW / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << xml_escape(title)
    << "</text>\n";
  o << "<rect x=\"" << kL << "\" y=\"" << kT << "\" width=\"" << kW - kL - kR << "\" height=\"" << kH - kT - kB
    << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
    const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    o << "<text x=\"" << fixed(f.px(xv), 1) << "\" y=\"" << kH - kB + 14 << "\" text-anchor=\"middle\">"
      << fixed(xv, 2) << "</text>\n";
    o << "<text x=\"" << kL - 4 << "\" y=\"" << fixed(f.py(yv) + 4, 1) << "\" text-anchor=\"end\">" << fixed(yv, 2)
      << "</text>\n";
  }
  o << "<text x=\"" << (kL + kW - kR) / 2 << "\" y=\"" << kH - 6 << "\" text-anchor=\"middle\">" << xml_escape(xl)
    << "</text>\n";
  o << "<text x=\"14\" y=\"" << (kT + kH - kB) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
    << (kT + kH - kB) / 2 << ")\">" << xml_escape(yl) << "</text>\n";
  return o.str();
}

std::string polyline(const Frame& f, const Curve& pts, const std::string& colour, const std::string& extra = "") {
  std::ostringstream o;
  o << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\"" << extra << " points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i) {
    o << (i ? " " : "") << fixed(f.px(pts[i].first), 2) << ',' << fixed(f.py(pts[i].second), 2);
  }
  o << "\"/>\n";
  return o.str();
}

std::vector<std::size_t> by_descending_score(const LabeledScores& d) {
  std::vector<std::size_t> idx(d.scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return d.scores[a] > d.scores[b]; });
  return idx;
}

std::string safe_name(const std::string& id) {
  std::string out = id;
  for (char& c : out) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  }
  return out;
}

}  // namespace

const std::vector<std::string>& report_columns() {
  static const std::vector<std::string> cols = {"roc_auc", "pr_auc", "f1", "map", "mean_detection_delay_s"};
  return cols;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

void write_report_csv(const std::filesystem::path& path, const MetricReport& r) {
  std::ostringstream o;
  const auto& cols = report_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) o << (i ? "," : "") << cols[i];
  o << '\n'
    << full(r.roc_auc) << ',' << full(r.pr_auc) << ',' << full(r.f1) << ',' << full(r.map) << ','
    << full(r.mean_detection_delay_s) << '\n';
  write_text(path, o.str());
}

std::string render_report_table(const MetricReport& r) {
  std::size_t normal = 0;
  for (const auto& v : r.videos) normal += v.label == Label::normal;
  std::ostringstream o;
  o << "Frame-level detection (" << r.videos.size() << " videos, " << normal << " normal, "
    << r.videos.size() - normal << " anomalous)\n";
  o << "  ROC-AUC   PR-AUC   F1      mAP (per video)   Detection delay (s)\n";
  o << "  " << std::left << std::setw(10) << fixed(r.roc_auc, 4) << std::setw(9) << fixed(r.pr_auc, 4)
    << std::setw(8) << fixed(r.f1, 4) << std::setw(18) << fixed(r.map, 4) << fixed(r.mean_detection_delay_s, 2)
    << '\n';
  o << "  mAP averages " << r.map_included << " videos with anomalous frames (" << r.map_excluded
    << " without excluded)\n";
  return o.str();
}

void write_video_csv(const std::filesystem::path& path, const MetricReport& r) {
  std::ostringstream o;
  o << "video_id,scene_id,label,theta,average_precision,delay_s,events\n" << std::setprecision(17);
  for (const auto& v : r.videos) {
    o << v.video_id << ',' << v.scene_id << ',' << to_string(v.label) << ',' << r.thresholds.at(v.scene_id).theta
      << ',';
    if (v.average_precision >= 0.0) o << v.average_precision;
    o << ',';
    if (v.delay_s >= 0.0) o << v.delay_s;
    o << ',' << v.events.size() << '\n';
  }
  write_text(path, o.str());
}

Curve roc_curve(const LabeledScores& d) {
  const double pos = static_cast<double>(d.positives());
  const double neg = static_cast<double>(d.negatives());
  if (pos == 0 || neg == 0) throw Error("roc curve needs both classes");
  const auto idx = by_descending_score(d);
  Curve out{{0.0, 0.0}};
  double tp = 0, fp = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && d.scores[idx[j]] == d.scores[idx[i]]) (d.labels[idx[j++]] == 1 ? tp : fp) += 1.0;
    out.emplace_back(fp / neg, tp / pos);
    i = j;
  }
  return out;
}

Curve pr_curve(const LabeledScores& d) {
  const double pos = static_cast<double>(d.positives());
  if (pos == 0) throw Error("pr curve needs a positive sample");
  const auto idx = by_descending_score(d);
  Curve out;
  double tp = 0, seen = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && d.scores[idx[j]] == d.scores[idx[i]]) tp += d.labels[idx[j++]] == 1 ? 1.0 : 0.0;
    seen += static_cast<double>(j - i);
    if (out.empty()) out.emplace_back(0.0, tp / seen);
    out.emplace_back(tp / pos, tp / seen);
    i = j;
  }
  return out;
}

std::string svg_trace(const VideoResult& v, double theta) {
  const double t_end = v.frame_labels.size() / v.fps;
  const Frame f{0.0, std::max(t_end, 1e-9), 0.0, 1.0};
  std::string s = svg_open(f, v.video_id + " (" + to_string(v.label) + ")", "time (s)", "anomaly score");
  std::ostringstream o;
  for (const auto& a : v.annotations) {
    const double x0 = f.px(a.onset_frame / v.fps);
    const double x1 = f.px(a.offset_frame / v.fps);
    o << "<rect x=\"" << fixed(x0, 2) << "\" y=\"" << kT << "\" width=\"" << fixed(x1 - x0, 2) << "\" height=\""
      << kH - kT - kB << "\" fill=\"#f4c7c3\"/>\n";
  }
  for (const auto& e : v.events) {
    o << "<line x1=\"" << fixed(f.px(e.onset_s), 2) << "\" x2=\"" << fixed(f.px(e.offset_s), 2) << "\" y1=\""
      << kT + 4 << "\" y2=\"" << kT + 4 << "\" stroke=\"#c0392b\" stroke-width=\"4\"/>\n";
  }
  s += o.str();
  const double ty = std::clamp(theta, 0.0, 1.0);
  s += polyline(f, {{0.0, ty}, {t_end, ty}}, "#888", " stroke-dasharray=\"4 3\"");
  Curve pts;
  for (std::size_t i = 0; i < v.trace.size(); ++i) pts.emplace_back(v.trace.time_s[i], v.trace.fused[i]);
  s += polyline(f, pts, "#1f5fa8");
  return s + "</svg>\n";
}

std::string svg_curve(const Curve& curve, const std::string& title, const std::string& x_label,
                      const std::string& y_label, bool diagonal) {
  const Frame f{0.0, 1.0, 0.0, 1.0};
  std::string s = svg_open(f, title, x_label, y_label);
  if (diagonal) s += polyline(f, {{0.0, 0.0}, {1.0, 1.0}}, "#bbb", " stroke-dasharray=\"4 3\"");
  s += polyline(f, curve, "#1f5fa8");
  return s + "</svg>\n";
}

void write_eval_outputs(const std::filesystem::path& dir, const MetricReport& r) {
  std::filesystem::create_directories(dir / "traces");
  std::filesystem::create_directories(dir / "plots");
  write_report_csv(dir / "report.csv", r);
  write_text(dir / "report.txt", render_report_table(r));
  write_video_csv(dir / "videos.csv", r);
  for (const auto& v : r.videos) {
    const std::string name = safe_name(v.video_id);
    write_trace_csv(dir / "traces" / (name + ".csv"), v.trace);
    write_text(dir / "plots" / (name + ".svg"), svg_trace(v, r.thresholds.at(v.scene_id).theta));
  }
  write_text(dir / "plots" / "roc.svg",
             svg_curve(roc_curve(r.pooled), "ROC (AUC " + fixed(r.roc_auc, 3) + ")", "false positive rate",
                       "true positive rate", true));
  write_text(dir / "plots" / "pr.svg",
             svg_curve(pr_curve(r.pooled), "Precision-recall (AP " + fixed(r.pr_auc, 3) + ")", "recall", "precision",
                       false));
}

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows) {
  std::ostringstream o;
  o << "variant,status,roc_auc,pr_auc";
  if (!rows.empty()) {
    for (const auto& [k, v] : rows.front().echo) o << ',' << k;
  }
  o << '\n';
  for (const auto& r : rows) {
    o << r.variant << ',' << (r.ok ? "ok" : "failed") << ',';
    if (r.ok) o << full(r.roc_auc) << ',' << full(r.pr_auc);
    else o << ',';
    for (const auto& [k, v] : r.echo) o << ',' << v;
    o << '\n';
  }
  write_text(path, o.str());
}

std::string render_ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream o;
  o << "Variant  ROC-AUC  PR-AUC   settings\n";
  for (const auto& r : rows) {
    o << std::left << std::setw(9) << r.variant;
    if (r.ok) o << std::setw(9) << fixed(r.roc_auc, 4) << std::setw(9) << fixed(r.pr_auc, 4);
    else o << std::setw(18) << "failed";
    for (std::size_t i = 0; i < r.echo.size(); ++i) o << (i ? " " : "") << r.echo[i].first << '=' << r.echo[i].second;
    if (!r.ok) o << "  (" << r.error << ')';
    o << '\n';
  }
  return o.str();
}

}  // namespace zsad
