#include "fusegnet/report.hpp"

#include "fusegnet/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>

namespace fusegnet {

namespace fs = std::filesystem;

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

// Minimal SVG writer.
class Svg {
 public:
  Svg(double width, double height) : width_(width), height_(height) {}

  void text(double x, double y, const std::string& s, int size = 12,
            const char* anchor = "middle") {
    body_ << "<text x=\"" << fixed(x) << "\" y=\"" << fixed(y) << "\" font-size=\"" << size
          << "\" text-anchor=\"" << anchor << "\" font-family=\"sans-serif\">" << escape(s)
          << "</text>\n";
  }
  void line(double x1, double y1, double x2, double y2, const std::string& stroke = "#000",
            double width = 1.0) {
    body_ << "<line x1=\"" << fixed(x1) << "\" y1=\"" << fixed(y1) << "\" x2=\"" << fixed(x2)
          << "\" y2=\"" << fixed(y2) << "\" stroke=\"" << stroke << "\" stroke-width=\""
          << fixed(width) << "\"/>\n";
  }
  void rect(double x, double y, double w, double h, const std::string& fill,
            const std::string& stroke = "#000") {
    body_ << "<rect x=\"" << fixed(x) << "\" y=\"" << fixed(y) << "\" width=\"" << fixed(w)
          << "\" height=\"" << fixed(h) << "\" fill=\"" << fill << "\" stroke=\"" << stroke
          << "\"/>\n";
  }
  void circle(double x, double y, double r, const std::string& fill) {
    body_ << "<circle cx=\"" << fixed(x) << "\" cy=\"" << fixed(y) << "\" r=\"" << fixed(r)
          << "\" fill=\"" << fill << "\" stroke=\"#000\" stroke-width=\"0.5\"/>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke) {
    body_ << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : pts) body_ << fixed(x) << "," << fixed(y) << " ";
    body_ << "\"/>\n";
  }
  void path(const std::string& d, const std::string& fill) {
    body_ << "<path d=\"" << d << "\" fill=\"" << fill << "\" stroke=\"#fff\"/>\n";
  }

  void save(const fs::path& file) const {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw DataError("cannot write " + file.string());
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed(width_, 0)
        << "\" height=\"" << fixed(height_, 0) << "\" viewBox=\"0 0 " << fixed(width_, 0) << " "
        << fixed(height_, 0) << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n"
        << body_.str() << "</svg>\n";
    if (!out) throw DataError("cannot write " + file.string());
  }

 private:
  static std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
      switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
      }
    }
    return out;
  }

  double width_;
  double height_;
  std::ostringstream body_;
};

const char* kPalette[] = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
                          "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac"};

std::string colour(std::size_t i) { return kPalette[i % (sizeof kPalette / sizeof *kPalette)]; }

struct Panel {
  double x0, y0, w, h;  // plot area
  double lo = 0.0, hi = 1.0;

  double y(double v) const { return y0 + h - (v - lo) / (hi - lo) * h; }
};

void draw_axes(Svg& svg, const Panel& p, const std::string& title, int ticks = 5) {
  svg.line(p.x0, p.y0 + p.h, p.x0 + p.w, p.y0 + p.h);
  svg.line(p.x0, p.y0, p.x0, p.y0 + p.h);
  for (int i = 0; i <= ticks; ++i) {
    const double v = p.lo + (p.hi - p.lo) * i / ticks;
    const double yy = p.y(v);
    svg.line(p.x0 - 4, yy, p.x0, yy);
    svg.line(p.x0, yy, p.x0 + p.w, yy, "#ddd", 0.5);
    const double span = p.hi - p.lo;
    svg.text(p.x0 - 6, yy + 4, span > 10 ? fixed(v, 0) : fixed(v, 2), 10, "end");
  }
  svg.text(p.x0 + p.w / 2, p.y0 - 8, title, 13);
}

void draw_box(Svg& svg, const Panel& p, double cx, double half, const BoxStats& b,
              const std::string& fill) {
  svg.line(cx, p.y(b.whisker_low), cx, p.y(b.q1));
  svg.line(cx, p.y(b.q3), cx, p.y(b.whisker_high));
  svg.line(cx - half / 2, p.y(b.whisker_low), cx + half / 2, p.y(b.whisker_low));
  svg.line(cx - half / 2, p.y(b.whisker_high), cx + half / 2, p.y(b.whisker_high));
  svg.rect(cx - half, p.y(b.q3), 2 * half, std::max(0.5, p.y(b.q1) - p.y(b.q3)), fill);
  svg.line(cx - half, p.y(b.median), cx + half, p.y(b.median), "#000", 2.0);
  for (double o : b.outliers) svg.circle(cx, p.y(o), 2.5, "none");
}

void placeholder(const fs::path& file, const std::string& title, const std::string& message) {
  Svg svg(480, 160);
  svg.text(240, 40, title, 14);
  svg.text(240, 90, message, 12);
  svg.save(file);
}

}  // namespace

double mean_excluding_sentinel(const std::vector<double>& values) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double v : values) {
    if (v == kPfomSentinel) continue;
    sum += v;
    ++n;
  }
  return n == 0 ? kPfomSentinel : sum / static_cast<double>(n);
}

BoxStats box_stats(std::vector<double> values) {
  if (values.empty()) throw ContractError("box statistics need at least one value");
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  BoxStats b;
  b.q1 = quantile(0.25);
  b.median = quantile(0.5);
  b.q3 = quantile(0.75);
  const double iqr = b.q3 - b.q1;
  const double lo_fence = b.q1 - 1.5 * iqr;
  const double hi_fence = b.q3 + 1.5 * iqr;
  b.whisker_low = b.q1;
  b.whisker_high = b.q3;
  for (double v : values) {
    if (v < lo_fence || v > hi_fence) {
      b.outliers.push_back(v);
    } else {
      b.whisker_low = std::min(b.whisker_low, v);
      b.whisker_high = std::max(b.whisker_high, v);
    }
  }
  return b;
}

MetricsReport build_report(std::vector<ImageResult> images, const CategorySpec& spec) {
  if (images.empty()) throw ContractError("report needs at least one image");
  validate(spec);
  MetricsReport report;
  report.spec = spec;

  std::vector<ConfusionCounts> all_counts;
  std::vector<double> all_pfom;
  std::map<int, std::vector<ConfusionCounts>> counts_by_cat;
  for (auto& img : images) {
    if (img.category < 1 || img.category > spec.category_count()) {
      throw ContractError(img.id + ": category out of range");
    }
    img.scores = scores(img.counts);
    all_counts.push_back(img.counts);
    all_pfom.push_back(img.pfom);
    counts_by_cat[img.category].push_back(img.counts);
    auto& cat = report.per_category[img.category];
    ++cat.images;
    cat.precision.push_back(img.scores.precision);
    cat.recall.push_back(img.scores.recall);
    cat.dsc.push_back(img.scores.dsc);
    cat.iou.push_back(img.scores.iou);
    cat.pfom.push_back(img.pfom);
    if (img.category == 1) report.category1_fp_counts.push_back(img.counts.fp);
  }
  report.data_based = data_based_metrics(all_counts);
  report.image_based = image_based_metrics(all_counts);
  report.pfom_mean = mean_excluding_sentinel(all_pfom);
  for (auto& [category, cat] : report.per_category) {
    const auto& counts = counts_by_cat[category];
    cat.data_based = data_based_metrics(counts);
    cat.image_based = image_based_metrics(counts);
    cat.pfom_mean = mean_excluding_sentinel(cat.pfom);
  }
  report.images = std::move(images);
  return report;
}

MetricsReport build_report(const std::vector<std::string>& ids, const std::vector<cv::Mat>& preds,
                           const std::vector<cv::Mat>& gts, const CategorySpec& spec) {
  if (ids.empty()) throw ContractError("report needs at least one image");
  if (ids.size() != preds.size() || ids.size() != gts.size()) {
    throw ContractError("ids, predictions and ground truths must be aligned");
  }
  std::vector<ImageResult> images;
  images.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    ImageResult img;
    img.id = ids[i];
    img.counts = confusion_counts(preds[i], gts[i]);
    img.pfom = pfom(preds[i], gts[i]);
    img.category = categorize(gts[i], spec);
    images.push_back(std::move(img));
  }
  return build_report(std::move(images), spec);
}

void write_per_image_csv(const MetricsReport& report, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "id,tp,fp,tn,fn,precision,recall,dsc,iou,pfom,category\n";
  for (const auto& img : report.images) {
    out << img.id << ',' << img.counts.tp << ',' << img.counts.fp << ',' << img.counts.tn << ','
        << img.counts.fn << ',' << num(img.scores.precision) << ',' << num(img.scores.recall)
        << ',' << num(img.scores.dsc) << ',' << num(img.scores.iou) << ',' << num(img.pfom) << ','
        << img.category << '\n';
  }
  if (!out) throw DataError("cannot write " + path.string());
}

void write_aggregate_csv(const MetricsReport& report, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "family,category,label,images,precision,recall,dsc,iou,pfom\n";
  auto row = [&](const char* family, const std::string& category, const std::string& label,
                 std::size_t n, const MetricTuple& t, double pfom_mean) {
    out << family << ',' << category << ',' << '"' << label << '"' << ',' << n << ','
        << num(t.precision) << ',' << num(t.recall) << ',' << num(t.dsc) << ',' << num(t.iou)
        << ',' << num(pfom_mean) << '\n';
  };
  row("data", "all", "all", report.images.size(), report.data_based, report.pfom_mean);
  row("image", "all", "all", report.images.size(), report.image_based, report.pfom_mean);
  for (const auto& [category, cat] : report.per_category) {
    const auto label = report.spec.label(category);
    row("data", std::to_string(category), label, cat.images, cat.data_based, cat.pfom_mean);
    row("image", std::to_string(category), label, cat.images, cat.image_based, cat.pfom_mean);
  }
  if (!out) throw DataError("cannot write " + path.string());
}

std::vector<ImageResult> read_per_image_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  static const std::vector<std::string> kColumns{"id",     "tp",  "fp",  "tn",   "fn",      "precision",
                                                 "recall", "dsc", "iou", "pfom", "category"};
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (split_csv_line(line) != kColumns) {
    throw DataError(path.string() + ": row 1: header must be " +
                    std::string("id,tp,fp,tn,fn,precision,recall,dsc,iou,pfom,category"));
  }
  std::vector<ImageResult> rows;
  std::size_t row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    auto where = [&](std::size_t col) {
      return path.string() + ": row " + std::to_string(row_no) + ", column '" + kColumns[col] + "'";
    };
    if (cells.size() != kColumns.size()) {
      throw DataError(path.string() + ": row " + std::to_string(row_no) + ": expected " +
                      std::to_string(kColumns.size()) + " columns, found " +
                      std::to_string(cells.size()));
    }
    auto as_int = [&](std::size_t col) -> int64_t {
      const std::string& s = cells[col];
      char* end = nullptr;
      const long long v = std::strtoll(s.c_str(), &end, 10);
      if (s.empty() || *end != '\0' || v < 0) throw DataError(where(col) + ": expected a count");
      return v;
    };
    auto as_real = [&](std::size_t col) -> double {
      const std::string& s = cells[col];
      char* end = nullptr;
      const double v = std::strtod(s.c_str(), &end);
      if (s.empty() || *end != '\0' || !std::isfinite(v)) {
        throw DataError(where(col) + ": expected a number");
      }
      return v;
    };
    ImageResult img;
    img.id = cells[0];
    if (img.id.empty()) throw DataError(where(0) + ": empty id");
    img.counts = ConfusionCounts{as_int(1), as_int(2), as_int(3), as_int(4)};
    img.scores = MetricTuple{as_real(5), as_real(6), as_real(7), as_real(8)};
    img.pfom = as_real(9);
    img.category = static_cast<int>(as_int(10));
    if (img.category < 1) throw DataError(where(10) + ": category must be >= 1");
    rows.push_back(std::move(img));
  }
  return rows;
}

std::vector<fs::path> write_report_plots(const MetricsReport& report, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<fs::path> written;
  const int ncat = report.spec.category_count();

  {
    // Image-based score distributions per category, one panel per metric.
    const double pw = 520;
    const double ph = 200;
    Svg svg(2 * pw + 120, 2 * ph + 180);
    const char* names[] = {"Precision", "Recall", "DSC", "IoU"};
    for (int m = 0; m < 4; ++m) {
      Panel p{70 + (m % 2) * (pw + 40), 50 + (m / 2) * (ph + 80), pw, ph};
      draw_axes(svg, p, std::string(names[m]) + " per category (image-based)");
      const double step = p.w / ncat;
      for (int c = 1; c <= ncat; ++c) {
        const double cx = p.x0 + step * (c - 0.5);
        svg.text(cx, p.y0 + p.h + 16, std::to_string(c), 10);
        auto it = report.per_category.find(c);
        if (it == report.per_category.end()) continue;
        const auto& cat = it->second;
        const std::vector<double>* values[] = {&cat.precision, &cat.recall, &cat.dsc, &cat.iou};
        draw_box(svg, p, cx, step * 0.3, box_stats(*values[m]), colour(static_cast<std::size_t>(c - 1)));
      }
      svg.text(p.x0 + p.w / 2, p.y0 + p.h + 34, "category", 11);
    }
    written.push_back(dir / "image_metrics_boxplot.svg");
    svg.save(written.back());
  }

  {
    const auto file = dir / "category_dsc_pie.svg";
    std::vector<std::pair<int, double>> slices;
    for (const auto& [c, cat] : report.per_category) {
      if (c != 1 && cat.data_based.dsc > 0.0) slices.emplace_back(c, cat.data_based.dsc);
    }
    if (slices.empty()) {
      placeholder(file, "Data-based DSC per category", "no category with foreground pixels");
    } else {
      double total = 0.0;
      for (const auto& s : slices) total += s.second;
      Svg svg(640, 460);
      svg.text(320, 30, "Data-based DSC per category (category 1 excluded)", 14);
      const double cx = 240;
      const double cy = 250;
      const double r = 170;
      double angle = -std::numbers::pi / 2;
      for (std::size_t i = 0; i < slices.size(); ++i) {
        const auto [c, dsc] = slices[i];
        const double sweep = 2 * std::numbers::pi * dsc / total;
        const std::string fill = colour(static_cast<std::size_t>(c - 1));
        const double a1 = angle + sweep;
        if (slices.size() == 1) {
          svg.circle(cx, cy, r, fill);
        } else {
          std::ostringstream d;
          d << "M " << fixed(cx) << " " << fixed(cy) << " L " << fixed(cx + r * std::cos(angle))
            << " " << fixed(cy + r * std::sin(angle)) << " A " << fixed(r) << " " << fixed(r)
            << " 0 " << (sweep > std::numbers::pi ? 1 : 0) << " 1 "
            << fixed(cx + r * std::cos(a1)) << " " << fixed(cy + r * std::sin(a1)) << " Z";
          svg.path(d.str(), fill);
        }
        const double mid = angle + sweep / 2;
        svg.text(cx + 0.65 * r * std::cos(mid), cy + 0.65 * r * std::sin(mid) + 4,
                 fixed(100.0 * dsc), 11);
        const double ly = 90 + 24 * static_cast<double>(i);
        svg.rect(450, ly - 11, 14, 14, fill);
        svg.text(472, ly, "C" + std::to_string(c) + " " + report.spec.label(c), 11, "start");
        angle = a1;
      }
      svg.save(file);
    }
    written.push_back(file);
  }

  {
    const auto file = dir / "category1_fp_boxplot.svg";
    if (report.category1_fp_counts.empty()) {
      placeholder(file, "False-positive pixels on empty ground truths", "no category-1 images");
    } else {
      std::vector<double> values(report.category1_fp_counts.begin(),
                                 report.category1_fp_counts.end());
      const double top = std::max(1.0, *std::max_element(values.begin(), values.end()));
      Svg svg(360, 380);
      Panel p{80, 50, 240, 280, 0.0, top * 1.05};
      draw_axes(svg, p, "False-positive pixels (category 1)");
      draw_box(svg, p, p.x0 + p.w / 2, 40, box_stats(values), colour(0));
      svg.text(p.x0 + p.w / 2, p.y0 + p.h + 20,
               std::to_string(values.size()) + " images", 11);
      svg.save(file);
    }
    written.push_back(file);
  }
  return written;
}

fs::path write_comparison_plot(const std::vector<PlotSeries>& series, const fs::path& dir) {
  if (series.empty()) throw ContractError("comparison plot needs at least one series");
  fs::create_directories(dir);
  const int ncat = series.front().report.spec.category_count();
  const double pw = 520;
  const double ph = 240;
  Svg svg(2 * pw + 140, ph + 140 + 20 * static_cast<double>(series.size()));
  const char* titles[] = {"Data-based DSC per category", "Mean PFOM per category"};
  for (int panel = 0; panel < 2; ++panel) {
    Panel p{70 + panel * (pw + 60), 50, pw, ph};
    draw_axes(svg, p, titles[panel]);
    const double step = p.w / (ncat - 1);
    for (int c = 2; c <= ncat; ++c) {
      svg.text(p.x0 + step * (c - 1.5), p.y0 + p.h + 16, std::to_string(c), 10);
    }
    for (std::size_t s = 0; s < series.size(); ++s) {
      std::vector<std::pair<double, double>> pts;
      auto flush = [&] {
        if (pts.size() > 1) svg.polyline(pts, colour(s));
        pts.clear();
      };
      for (int c = 2; c <= ncat; ++c) {
        const auto& cats = series[s].report.per_category;
        auto it = cats.find(c);
        const double v = it == cats.end()
                             ? kPfomSentinel
                             : (panel == 0 ? it->second.data_based.dsc : it->second.pfom_mean);
        if (it == cats.end() || v == kPfomSentinel) {
          flush();
          continue;
        }
        const double x = p.x0 + step * (c - 1.5);
        pts.emplace_back(x, p.y(v));
        svg.circle(x, p.y(v), 3, colour(s));
      }
      flush();
    }
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    const double ly = ph + 120 + 20 * static_cast<double>(s);
    svg.rect(70, ly - 11, 14, 14, colour(s));
    svg.text(92, ly, series[s].label, 12, "start");
  }
  const auto file = dir / "category_comparison.svg";
  svg.save(file);
  return file;
}

}  // namespace fusegnet
