#include "stitch/harness/report.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "stitch/harness/aggregate.hpp"

namespace stitch::harness {

namespace fs = std::filesystem;

ReportKind report_kind_from_string(const std::string& s) {
    if (s == "rank_bars") return ReportKind::rank_bars;
    if (s == "rank_vs_epoch") return ReportKind::rank_vs_epoch;
    if (s == "evasion_bars") return ReportKind::evasion_bars;
    if (s == "lr_sweep") return ReportKind::lr_sweep;
    throw ConfigError("unknown report kind: " + s);
}

std::string to_string(ReportKind k) {
    switch (k) {
        case ReportKind::rank_bars: return "rank_bars";
        case ReportKind::rank_vs_epoch: return "rank_vs_epoch";
        case ReportKind::evasion_bars: return "evasion_bars";
        case ReportKind::lr_sweep: return "lr_sweep";
    }
    throw ConfigError("unknown report kind");
}

namespace {

constexpr const char* kSeriesColors[] = {"#3b6fb6", "#c0563a", "#4d9950", "#8a5ab0", "#b0892c", "#50a3a0"};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

class SvgCanvas {
  public:
    SvgCanvas(int w, int h) : w_(w), h_(h) {
        out_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
             << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
        out_ << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
    }

    void line(double x1, double y1, double x2, double y2, const std::string& color = "#333",
              double width = 1.0) {
        out_ << "<line x1=\"" << fmt(x1) << "\" y1=\"" << fmt(y1) << "\" x2=\"" << fmt(x2) << "\" y2=\""
             << fmt(y2) << "\" stroke=\"" << color << "\" stroke-width=\"" << fmt(width) << "\"/>\n";
    }

    void rect(double x, double y, double w, double h, const std::string& fill) {
        out_ << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\"" << fmt(w) << "\" height=\""
             << fmt(h) << "\" fill=\"" << fill << "\"/>\n";
    }

    void text(double x, double y, const std::string& s, int size = 11, const std::string& anchor = "middle",
              const std::string& color = "#222") {
        out_ << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" font-family=\"sans-serif\" font-size=\""
             << size << "\" text-anchor=\"" << anchor << "\" fill=\"" << color << "\">" << s << "</text>\n";
    }

    void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color,
                  double width = 1.5, double opacity = 1.0) {
        out_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << fmt(width)
             << "\" stroke-opacity=\"" << fmt(opacity) << "\" points=\"";
        for (const auto& [x, y] : pts) out_ << fmt(x) << "," << fmt(y) << " ";
        out_ << "\"/>\n";
    }

    std::string finish() {
        out_ << "</svg>\n";
        return out_.str();
    }

    int width() const { return w_; }
    int height() const { return h_; }

  private:
    int w_, h_;
    std::ostringstream out_;
};

std::vector<RunRecord> ok_records_sorted(std::vector<RunRecord> records) {
    std::erase_if(records, [](const RunRecord& r) { return r.status != "ok"; });
    std::sort(records.begin(), records.end(), [](const RunRecord& a, const RunRecord& b) {
        return std::tie(a.factor, a.lr, a.threshold, a.seed, a.run_id) <
               std::tie(b.factor, b.lr, b.threshold, b.seed, b.run_id);
    });
    if (records.empty()) throw ContractError("emit_report: no successful records");
    return records;
}

fs::path write_text(const fs::path& out_dir, const std::string& name, const std::string& body) {
    fs::create_directories(out_dir);
    const fs::path p = out_dir / name;
    write_file_atomic(p, body);
    return p;
}

std::vector<fs::path> emit_rank_bars(const std::vector<RunRecord>& records, const fs::path& out_dir) {
    const auto rows = aggregate(records);
    std::vector<fs::path> written;
    written.push_back(write_text(out_dir, "rank_bars.csv", aggregate_csv(rows)));

    // One bar group per (factor, lr, threshold); one bar per mode.
    std::vector<std::string> modes;
    for (const auto& r : rows) {
        if (std::find(modes.begin(), modes.end(), r.mode) == modes.end()) modes.push_back(r.mode);
    }
    std::sort(modes.begin(), modes.end());
    std::vector<std::tuple<int, double, int>> groups;
    for (const auto& r : rows) {
        const auto g = std::make_tuple(r.factor, r.lr, r.threshold);
        if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
    }
    std::sort(groups.begin(), groups.end());

    double max_y = 0.0;
    for (const auto& r : rows) max_y = std::max(max_y, r.mean_final + r.std_final);
    max_y = std::max(max_y, 1.0);

    const int margin = 50, bar_w = 26, gap = 30;
    const int plot_h = 240;
    const int group_w = static_cast<int>(modes.size()) * bar_w + gap;
    SvgCanvas svg(margin * 2 + static_cast<int>(groups.size()) * group_w, plot_h + 90);
    const double y0 = 20 + plot_h;
    auto ych = [&](double v) { return y0 - v / max_y * plot_h; };

    svg.line(margin, y0, svg.width() - margin / 2, y0);
    svg.line(margin, y0, margin, 20);
    for (int t = 0; t <= 4; ++t) {
        const double v = max_y * t / 4.0;
        svg.line(margin - 4, ych(v), margin, ych(v));
        svg.text(margin - 8, ych(v) + 4, fmt(v), 10, "end");
    }

    for (size_t gi = 0; gi < groups.size(); ++gi) {
        const auto& [factor, lr, threshold] = groups[gi];
        const double gx = margin + 10 + static_cast<double>(gi) * group_w;
        for (size_t mi = 0; mi < modes.size(); ++mi) {
            for (const auto& r : rows) {
                if (std::make_tuple(r.factor, r.lr, r.threshold) != groups[gi] || r.mode != modes[mi]) continue;
                const double x = gx + static_cast<double>(mi) * bar_w;
                svg.rect(x, ych(r.mean_final), bar_w - 6, y0 - ych(r.mean_final),
                         kSeriesColors[mi % 6]);
                const double cx = x + (bar_w - 6) / 2.0;
                svg.line(cx, ych(r.mean_final - r.std_final), cx, ych(r.mean_final + r.std_final), "#222");
            }
        }
        std::string label = "f" + std::to_string(factor);
        if (threshold > 0) label += " x" + std::to_string(threshold);
        svg.text(gx + modes.size() * bar_w / 2.0, y0 + 16, label);
    }
    for (size_t mi = 0; mi < modes.size(); ++mi) {
        const double lx = margin + static_cast<double>(mi) * 130;
        svg.rect(lx, y0 + 30, 12, 12, kSeriesColors[mi % 6]);
        svg.text(lx + 18, y0 + 40, modes[mi], 11, "start");
    }
    svg.text(svg.width() / 2.0, 14, "mean rank by split factor (final epoch, mean +/- std over seeds)");
    written.push_back(write_text(out_dir, "rank_bars.svg", svg.finish()));
    return written;
}

std::vector<fs::path> emit_rank_vs_epoch(const std::vector<RunRecord>& records, const fs::path& out_dir) {
    std::vector<fs::path> written;
    std::ostringstream csv;
    csv << "run_id,factor,seed,lr,threshold,mode,epoch,mean_rank\n";
    std::set<std::pair<int, std::string>> panels;
    for (const auto& r : records) {
        for (const auto& [curve_name, values] : r.curves) {
            if (!curve_name.starts_with("rank_")) continue;
            const std::string mode = curve_name.substr(5);
            panels.insert({r.factor, mode});
            for (size_t ep = 0; ep < values.size(); ++ep) {
                csv << r.run_id << "," << r.factor << "," << r.seed << "," << csv_double(r.lr) << ","
                    << r.threshold << "," << mode << "," << ep << "," << csv_double(values[ep]) << "\n";
            }
        }
    }
    written.push_back(write_text(out_dir, "rank_vs_epoch.csv", csv.str()));

    for (const auto& [factor, mode] : panels) {
        std::vector<const RunRecord*> runs;
        for (const auto& r : records) {
            if (r.factor == factor && r.curves.contains("rank_" + mode)) runs.push_back(&r);
        }
        if (runs.empty()) continue;
        size_t n_epochs = 0;
        double max_y = 1.0;
        for (const auto* r : runs) {
            const auto& c = r->curves.at("rank_" + mode);
            n_epochs = std::max(n_epochs, c.size());
            for (double v : c) max_y = std::max(max_y, v);
        }

        const int margin = 50, plot_w = 420, plot_h = 240;
        SvgCanvas svg(margin * 2 + plot_w, plot_h + 70);
        const double y0 = 20 + plot_h;
        auto xch = [&](double ep) {
            return margin + (n_epochs > 1 ? ep / static_cast<double>(n_epochs - 1) : 0.5) * plot_w;
        };
        auto ych = [&](double v) { return y0 - v / max_y * plot_h; };
        svg.line(margin, y0, margin + plot_w, y0);
        svg.line(margin, y0, margin, 20);
        for (int t = 0; t <= 4; ++t) {
            const double v = max_y * t / 4.0;
            svg.text(margin - 8, ych(v) + 4, fmt(v), 10, "end");
        }
        for (size_t ep = 0; ep < n_epochs; ++ep) {
            svg.text(xch(static_cast<double>(ep)), y0 + 14, std::to_string(ep), 10);
        }

        // Per-seed traces plus the seed mean.
        std::vector<double> mean(n_epochs, 0.0);
        for (const auto* r : runs) {
            const auto& c = r->curves.at("rank_" + mode);
            std::vector<std::pair<double, double>> pts;
            for (size_t ep = 0; ep < c.size(); ++ep) {
                pts.emplace_back(xch(static_cast<double>(ep)), ych(c[ep]));
                mean[ep] += c[ep];
            }
            svg.polyline(pts, "#888", 1.0, 0.6);
        }
        std::vector<std::pair<double, double>> mean_pts;
        for (size_t ep = 0; ep < n_epochs; ++ep) {
            mean[ep] /= static_cast<double>(runs.size());
            mean_pts.emplace_back(xch(static_cast<double>(ep)), ych(mean[ep]));
        }
        svg.polyline(mean_pts, kSeriesColors[0], 2.5);
        svg.text(svg.width() / 2.0, 14,
                 mode + " mean rank vs epoch, f=" + std::to_string(factor) + " (grey: seeds, blue: mean)");
        svg.text(svg.width() / 2.0, y0 + 34, "epoch", 11);
        written.push_back(write_text(
            out_dir, "rank_vs_epoch_f" + std::to_string(factor) + "_" + mode + ".svg", svg.finish()));
    }
    return written;
}

std::vector<fs::path> emit_evasion_bars(const std::vector<RunRecord>& records, const fs::path& out_dir) {
    // Evasion rows are seed-independent; deduplicate by (group, factor).
    std::map<std::pair<std::string, int>, std::pair<long, long>> rows;
    for (const auto& r : records) {
        for (const auto& row : r.evasion) {
            rows[{row.group, row.factor}] = {row.total, row.flagged};
        }
    }
    if (rows.empty()) throw ContractError("emit_report: no evasion data in these records");

    std::ostringstream csv;
    csv << "group,factor,total,flagged,evasion_rate\n";
    for (const auto& [key, v] : rows) {
        const moderation::EvasionReport::Row row{key.first, key.second, v.first, v.second};
        csv << key.first << "," << key.second << "," << v.first << "," << v.second << ","
            << csv_double(row.evasion_rate()) << "\n";
    }
    std::vector<fs::path> written;
    written.push_back(write_text(out_dir, "evasion_bars.csv", csv.str()));

    const int margin = 50, bar_w = 44, plot_h = 240;
    SvgCanvas svg(margin * 2 + static_cast<int>(rows.size()) * (bar_w + 16), plot_h + 80);
    const double y0 = 20 + plot_h;
    auto ych = [&](double v) { return y0 - v * plot_h; };
    svg.line(margin, y0, svg.width() - margin / 2, y0);
    svg.line(margin, y0, margin, 20);
    for (int t = 0; t <= 4; ++t) {
        svg.text(margin - 8, ych(t / 4.0) + 4, fmt(t / 4.0), 10, "end");
    }
    size_t i = 0;
    for (const auto& [key, v] : rows) {
        const moderation::EvasionReport::Row row{key.first, key.second, v.first, v.second};
        const double x = margin + 8 + static_cast<double>(i) * (bar_w + 16);
        svg.rect(x, ych(row.evasion_rate()), bar_w, y0 - ych(row.evasion_rate()), kSeriesColors[i % 6]);
        svg.text(x + bar_w / 2.0, y0 + 14, key.first + " f" + std::to_string(key.second), 10);
        svg.text(x + bar_w / 2.0, ych(row.evasion_rate()) - 4, fmt(row.evasion_rate()), 10);
        ++i;
    }
    svg.text(svg.width() / 2.0, 14, "moderation evasion rate by group and split factor");
    written.push_back(write_text(out_dir, "evasion_bars.svg", svg.finish()));
    return written;
}

std::vector<fs::path> emit_lr_sweep(const std::vector<RunRecord>& records, const fs::path& out_dir) {
    const auto rows = aggregate(records);
    std::vector<double> lrs;
    for (const auto& r : rows) {
        if (std::find(lrs.begin(), lrs.end(), r.lr) == lrs.end()) lrs.push_back(r.lr);
    }
    std::sort(lrs.begin(), lrs.end());

    std::ostringstream csv;
    csv << "factor,lr,threshold,mode,n_seeds,mean_final_rank,std_final_rank\n";
    for (const auto& r : rows) {
        csv << r.factor << "," << csv_double(r.lr) << "," << r.threshold << "," << r.mode << ","
            << r.n_seeds << "," << csv_double(r.mean_final) << "," << csv_double(r.std_final) << "\n";
    }
    std::vector<fs::path> written;
    written.push_back(write_text(out_dir, "lr_sweep.csv", csv.str()));

    std::vector<std::pair<int, std::string>> series;
    for (const auto& r : rows) {
        const auto key = std::make_pair(r.factor, r.mode);
        if (std::find(series.begin(), series.end(), key) == series.end()) series.push_back(key);
    }
    std::sort(series.begin(), series.end());
    double max_y = 1.0;
    for (const auto& r : rows) max_y = std::max(max_y, r.mean_final);

    const int margin = 60, plot_w = 420, plot_h = 240;
    SvgCanvas svg(margin * 2 + plot_w, plot_h + 100);
    const double y0 = 20 + plot_h;
    auto xch = [&](size_t idx) {
        return margin + (lrs.size() > 1 ? static_cast<double>(idx) / static_cast<double>(lrs.size() - 1)
                                        : 0.5) *
                            plot_w;
    };
    auto ych = [&](double v) { return y0 - v / max_y * plot_h; };
    svg.line(margin, y0, margin + plot_w, y0);
    svg.line(margin, y0, margin, 20);
    for (size_t i = 0; i < lrs.size(); ++i) svg.text(xch(i), y0 + 14, fmt(lrs[i]), 10);
    for (int t = 0; t <= 4; ++t) svg.text(margin - 8, ych(max_y * t / 4.0) + 4, fmt(max_y * t / 4.0), 10, "end");

    for (size_t si = 0; si < series.size(); ++si) {
        std::vector<std::pair<double, double>> pts;
        for (size_t i = 0; i < lrs.size(); ++i) {
            for (const auto& r : rows) {
                if (r.factor == series[si].first && r.mode == series[si].second && r.lr == lrs[i]) {
                    pts.emplace_back(xch(i), ych(r.mean_final));
                }
            }
        }
        svg.polyline(pts, kSeriesColors[si % 6], 2.0);
        const double ly = y0 + 34 + static_cast<double>(si) * 14;
        svg.rect(margin, ly - 9, 12, 4, kSeriesColors[si % 6]);
        svg.text(margin + 18, ly, "f" + std::to_string(series[si].first) + " " + series[si].second, 11,
                 "start");
    }
    svg.text(svg.width() / 2.0, 14, "final mean rank vs learning rate");
    written.push_back(write_text(out_dir, "lr_sweep.svg", svg.finish()));
    return written;
}

}  // namespace

std::vector<fs::path> emit_report(const std::vector<RunRecord>& records, ReportKind kind,
                                  const fs::path& out_dir) {
    const auto sorted = ok_records_sorted(records);
    switch (kind) {
        case ReportKind::rank_bars: return emit_rank_bars(sorted, out_dir);
        case ReportKind::rank_vs_epoch: return emit_rank_vs_epoch(sorted, out_dir);
        case ReportKind::evasion_bars: return emit_evasion_bars(sorted, out_dir);
        case ReportKind::lr_sweep: return emit_lr_sweep(sorted, out_dir);
    }
    throw ConfigError("unknown report kind");
}

}  // namespace stitch::harness
