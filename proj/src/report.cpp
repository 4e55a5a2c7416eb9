#include "msadapt/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

namespace msadapt {

namespace {

void check_row_counts(const StrategyResult& r) {
    for (const FoldResult& fr : r.folds) {
        size_t expected = 0;
        for (const EpochLog& log : fr.logs) expected += log.eval_rows.size();
        if (fr.test_rows.size() != expected)
            throw ValidationError("report: fold " + std::to_string(fr.fold) + " of " +
                                  strategy_name(r.strategy) + " has " +
                                  std::to_string(fr.test_rows.size()) + " rows, expected " +
                                  std::to_string(expected));
    }
}

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open for writing: " + path);
    return f;
}

struct Series {
    std::string label;
    std::vector<double> y;  // indexed by epoch; NaN = missing
};

// Minimal static line chart; deterministic text output.
void write_svg(const std::string& path, const std::string& title,
               const std::vector<Series>& series) {
    const double W = 640, H = 420, ml = 60, mr = 150, mt = 40, mb = 50;
    const double pw = W - ml - mr, ph = H - mt - mb;
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"};

    size_t max_epochs = 1;
    double lo = 0.0, hi = 1.0;  // metrics live in [0,1] (VC in [-1,1])
    bool any_negative = false;
    for (const auto& s : series) {
        max_epochs = std::max(max_epochs, s.y.size());
        for (double v : s.y)
            if (std::isfinite(v) && v < 0) any_negative = true;
    }
    if (any_negative) lo = -1.0;
    const double x_max = static_cast<double>(max_epochs - 1);
    auto px = [&](double e) { return ml + (x_max > 0 ? e / x_max : 0.0) * pw; };
    auto py = [&](double v) { return mt + (hi - v) / (hi - lo) * ph; };

    auto f = open_out(path);
    char buf[256];
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    f << "<text x=\"" << ml << "\" y=\"24\" font-size=\"15\">" << title << "</text>\n";
    // axes + gridlines
    for (int i = 0; i <= 4; ++i) {
        const double v = lo + (hi - lo) * i / 4.0;
        std::snprintf(buf, sizeof(buf),
                      "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/>"
                      "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%.2f</text>\n",
                      ml, py(v), W - mr, py(v), ml - 6, py(v) + 4, v);
        f << buf;
    }
    const int x_step = max_epochs > 10 ? static_cast<int>(max_epochs - 1) / 5 : 1;
    for (size_t e = 0; e < max_epochs; e += x_step) {
        std::snprintf(buf, sizeof(buf), "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%zu</text>\n",
                      px(static_cast<double>(e)), H - mb + 18, e);
        f << buf;
    }
    f << "<text x=\"" << ml + pw / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">epoch</text>\n";
    std::snprintf(buf, sizeof(buf),
                  "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"#444\"/>\n",
                  ml, mt, pw, ph);
    f << buf;

    for (size_t si = 0; si < series.size(); ++si) {
        const Series& s = series[si];
        const char* col = colors[si % 5];
        // epoch-0 reference
        if (!s.y.empty() && std::isfinite(s.y[0])) {
            std::snprintf(buf, sizeof(buf),
                          "<line x1=\"%.1f\" y1=\"%.2f\" x2=\"%.1f\" y2=\"%.2f\" stroke=\"%s\" "
                          "stroke-dasharray=\"5,4\" opacity=\"0.55\"/>\n",
                          ml, py(s.y[0]), W - mr, py(s.y[0]), col);
            f << buf;
        }
        f << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.8\" points=\"";
        for (size_t e = 0; e < s.y.size(); ++e) {
            if (!std::isfinite(s.y[e])) continue;
            std::snprintf(buf, sizeof(buf), "%.1f,%.2f ", px(static_cast<double>(e)), py(s.y[e]));
            f << buf;
        }
        f << "\"/>\n";
        std::snprintf(buf, sizeof(buf),
                      "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"%s\" stroke-width=\"1.8\"/>"
                      "<text x=\"%.1f\" y=\"%.1f\">%s</text>\n",
                      W - mr + 10, mt + 16.0 * si + 8, W - mr + 34, mt + 16.0 * si + 8, col,
                      W - mr + 40, mt + 16.0 * si + 12, s.label.c_str());
        f << buf;
    }
    f << "</svg>\n";
}

}  // namespace

std::string format_metric(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

void write_raw_csv(const std::vector<StrategyResult>& results, const std::string& path) {
    for (const auto& r : results) check_row_counts(r);
    auto f = open_out(path);
    f << "strategy,fold,epoch,subject_id,dsc,lf1_precision,lf1_recall,lf1,"
         "gt_volume_mm3,pred_volume_mm3\n";
    for (const auto& r : results)
        for (const auto& fr : r.folds)
            for (const MetricRow& row : fr.test_rows)
                f << row.strategy << ',' << row.fold << ',' << row.epoch << ',' << row.subject_id
                  << ',' << format_metric(row.dsc) << ',' << format_metric(row.lf1_precision)
                  << ',' << format_metric(row.lf1_recall) << ',' << format_metric(row.lf1) << ','
                  << format_metric(row.gt_volume_mm3) << ',' << format_metric(row.pred_volume_mm3)
                  << '\n';
}

void write_aggregate_csv(const std::vector<StrategyResult>& results, const std::string& path) {
    auto f = open_out(path);
    f << "strategy,epoch,mean_dsc,mean_lf1,volume_correlation\n";
    for (const auto& r : results)
        for (const EpochAggregate& a : r.by_epoch)
            f << strategy_name(r.strategy) << ',' << a.epoch << ',' << format_metric(a.mean_dsc)
              << ',' << format_metric(a.mean_lf1) << ','
              << (a.volume_corr ? format_metric(*a.volume_corr) : std::string()) << '\n';
}

void write_metric_curves(const std::vector<StrategyResult>& results, const std::string& dir) {
    std::filesystem::create_directories(dir);
    auto build = [&](auto pick) {
        std::vector<Series> out;
        for (const auto& r : results) {
            Series s;
            s.label = strategy_name(r.strategy);
            for (const EpochAggregate& a : r.by_epoch) s.y.push_back(pick(a));
            out.push_back(std::move(s));
        }
        return out;
    };
    const auto base = std::filesystem::path(dir);
    write_svg((base / "dsc.svg").string(), "Mean DSC by fine-tuning epoch",
              build([](const EpochAggregate& a) { return a.mean_dsc; }));
    write_svg((base / "lf1.svg").string(), "Mean lesion-wise F1 by fine-tuning epoch",
              build([](const EpochAggregate& a) { return a.mean_lf1; }));
    write_svg((base / "vc.svg").string(), "Lesion volume correlation by fine-tuning epoch",
              build([](const EpochAggregate& a) {
                  return a.volume_corr ? *a.volume_corr : std::numeric_limits<double>::quiet_NaN();
              }));
}

}  // namespace msadapt
