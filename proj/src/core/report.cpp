#include "core/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "core/metrics.hpp"
#include "core/stoi.hpp"
#include "core/wav.hpp"

namespace msce {

using nlohmann::json;

namespace {

std::string fmt(double v, int decimals = 3) {
    if (std::isnan(v)) return "-";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

struct Aggregate {
    double si_sdr = 0.0, seg_snr = 0.0, stoi = 0.0, pesq = 0.0;
    long long count = 0, pesq_count = 0;

    void add(const EvalRow& r) {
        si_sdr += r.si_sdr;
        seg_snr += r.seg_snr;
        stoi += r.stoi;
        ++count;
        if (r.has_pesq()) {
            pesq += r.pesq;
            ++pesq_count;
        }
    }
    double mean_si_sdr() const { return si_sdr / count; }
    double mean_seg_snr() const { return seg_snr / count; }
    double mean_stoi() const { return stoi / count; }
    double mean_pesq() const {
        return pesq_count == 0 ? std::numeric_limits<double>::quiet_NaN() : pesq / pesq_count;
    }
};

std::vector<std::string> system_order(const std::vector<EvalRow>& rows) {
    std::vector<std::string> order;
    for (const auto& r : rows)
        if (std::find(order.begin(), order.end(), r.system) == order.end())
            order.push_back(r.system);
    return order;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) {
        while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
        std::size_t start = 0;
        while (start < field.size() && field[start] == ' ') ++start;
        out.push_back(field.substr(start));
    }
    return out;
}

// An aligned text table: first column left-justified, the rest right-justified.
std::string render_table(const std::vector<std::vector<std::string>>& cells) {
    std::vector<std::size_t> widths;
    for (const auto& row : cells) {
        if (widths.size() < row.size()) widths.resize(row.size(), 0);
        for (std::size_t i = 0; i < row.size(); ++i)
            widths[i] = std::max(widths[i], row[i].size());
    }
    std::string out;
    for (const auto& row : cells) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i > 0) out += "  ";
            const std::size_t pad = widths[i] - row[i].size();
            if (i == 0) {
                out += row[i];
                out.append(pad, ' ');
            } else {
                out.append(pad, ' ');
                out += row[i];
            }
        }
        out += '\n';
    }
    return out;
}

}  // namespace

std::string MetricsReport::results_csv() const {
    std::string out = "system,channel,noise,snr_db,si_sdr,seg_snr,stoi,pesq\n";
    for (const auto& r : rows) {
        out += r.system + ',' + std::to_string(r.channel) + ',' + r.noise + ',' + fmt(r.snr_db, 1) +
               ',' + fmt(r.si_sdr) + ',' + fmt(r.seg_snr) + ',' + fmt(r.stoi) + ',' +
               (r.has_pesq() ? fmt(r.pesq) : "") + '\n';
    }
    return out;
}

std::string MetricsReport::summary_csv() const {
    std::map<std::string, Aggregate> agg;
    for (const auto& r : rows) agg[r.system].add(r);
    std::string out = "system,si_sdr,seg_snr,stoi,pesq\n";
    for (const auto& sys : system_order(rows)) {
        const auto& a = agg.at(sys);
        out += sys + ',' + fmt(a.mean_si_sdr()) + ',' + fmt(a.mean_seg_snr()) + ',' +
               fmt(a.mean_stoi()) + ',' + (a.pesq_count ? fmt(a.mean_pesq()) : "") + '\n';
    }
    return out;
}

std::string MetricsReport::summary_text() const {
    std::map<std::string, Aggregate> agg;
    for (const auto& r : rows) agg[r.system].add(r);
    std::vector<std::vector<std::string>> cells;
    cells.push_back({"System", "SI-SDR (dB)", "segSNR (dB)", "STOI", "PESQ"});
    for (const auto& sys : system_order(rows)) {
        const auto& a = agg.at(sys);
        cells.push_back({sys, fmt(a.mean_si_sdr()), fmt(a.mean_seg_snr()), fmt(a.mean_stoi()),
                         fmt(a.mean_pesq())});
    }
    return render_table(cells);
}

std::string MetricsReport::per_snr_csv() const {
    std::map<std::pair<std::string, double>, Aggregate> agg;
    std::set<double> snrs;
    for (const auto& r : rows) {
        agg[{r.system, r.snr_db}].add(r);
        snrs.insert(r.snr_db);
    }
    std::string out = "system,snr_db,si_sdr,seg_snr,stoi,pesq\n";
    for (const auto& sys : system_order(rows)) {
        for (double snr : snrs) {
            const auto it = agg.find({sys, snr});
            if (it == agg.end()) continue;
            const auto& a = it->second;
            out += sys + ',' + fmt(snr, 1) + ',' + fmt(a.mean_si_sdr()) + ',' +
                   fmt(a.mean_seg_snr()) + ',' + fmt(a.mean_stoi()) + ',' +
                   (a.pesq_count ? fmt(a.mean_pesq()) : "") + '\n';
        }
    }
    return out;
}

std::string MetricsReport::per_snr_text() const {
    std::map<std::pair<std::string, double>, Aggregate> agg;
    std::set<double> snrs;
    for (const auto& r : rows) {
        agg[{r.system, r.snr_db}].add(r);
        snrs.insert(r.snr_db);
    }
    std::vector<std::vector<std::string>> cells;
    std::vector<std::string> head{"System"};
    for (double snr : snrs) head.push_back(fmt(snr, 0) + " dB");
    head.push_back("metric");
    for (const char* metric : {"si_sdr", "seg_snr", "stoi"}) {
        for (const auto& sys : system_order(rows)) {
            std::vector<std::string> row{sys};
            for (double snr : snrs) {
                const auto it = agg.find({sys, snr});
                if (it == agg.end()) {
                    row.push_back("-");
                    continue;
                }
                const auto& a = it->second;
                if (metric == std::string("si_sdr")) row.push_back(fmt(a.mean_si_sdr()));
                else if (metric == std::string("seg_snr")) row.push_back(fmt(a.mean_seg_snr()));
                else row.push_back(fmt(a.mean_stoi()));
            }
            row.push_back(metric);
            cells.push_back(std::move(row));
        }
    }
    cells.insert(cells.begin(), head);
    return render_table(cells);
}

json MetricsReport::summary_json() const {
    std::map<std::string, Aggregate> agg;
    for (const auto& r : rows) agg[r.system].add(r);
    json systems = json::object();
    for (const auto& sys : system_order(rows)) {
        const auto& a = agg.at(sys);
        json entry{{"si_sdr", a.mean_si_sdr()},
                   {"seg_snr", a.mean_seg_snr()},
                   {"stoi", a.mean_stoi()},
                   {"conditions", a.count}};
        if (a.pesq_count) entry["pesq"] = a.mean_pesq();
        systems[sys] = entry;
    }
    return json{{"systems", systems}, {"rows", rows.size()}};
}

void MetricsReport::merge_pesq_csv(const std::string& csv_text) {
    std::istringstream ss(csv_text);
    std::string line;
    if (!std::getline(ss, line)) fail_data("pesq csv: empty file");
    const auto header = split_csv_line(line);
    int col_system = -1, col_noise = -1, col_snr = -1, col_pesq = -1, col_channel = -1;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == "system") col_system = static_cast<int>(i);
        else if (header[i] == "noise") col_noise = static_cast<int>(i);
        else if (header[i] == "snr_db") col_snr = static_cast<int>(i);
        else if (header[i] == "pesq") col_pesq = static_cast<int>(i);
        else if (header[i] == "channel") col_channel = static_cast<int>(i);
        else fail_data("pesq csv: unknown column " + header[i]);
    }
    if (col_system < 0 || col_noise < 0 || col_snr < 0 || col_pesq < 0)
        fail_data("pesq csv: need columns system,noise,snr_db,pesq");

    while (std::getline(ss, line)) {
        if (line.empty() || line == "\r") continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size()) fail_data("pesq csv: ragged row: " + line);
        const std::string& system = fields[col_system];
        const std::string& noise = fields[col_noise];
        const double snr = std::stod(fields[col_snr]);
        const double pesq = std::stod(fields[col_pesq]);
        const int channel = col_channel >= 0 ? std::stoi(fields[col_channel]) : -1;
        bool matched = false;
        for (auto& r : rows) {
            if (r.system == system && r.noise == noise && r.snr_db == snr &&
                (channel < 0 || r.channel == channel)) {
                r.pesq = pesq;
                matched = true;
            }
        }
        if (!matched) fail_data("pesq csv: row matches no measured condition: " + line);
    }
}

MetricsReport run_eval(const std::string& eval_manifest_path) {
    json j;
    try {
        j = json::parse(read_file(eval_manifest_path));
    } catch (const json::exception& e) {
        fail_data("eval manifest parse error: " + std::string(e.what()));
    }
    if (!j.is_object() || !j.contains("entries") || !j.at("entries").is_array())
        fail_data("eval manifest must be an object with an entries array");
    if (j.contains("version") && j.at("version").get<int>() > 1)
        fail_data("eval manifest version newer than supported");

    MetricsReport report;
    for (const auto& entry : j.at("entries")) {
        for (const char* key : {"system", "clean", "processed", "noise", "snr_db"})
            if (!entry.contains(key)) fail_data(std::string("eval manifest entry missing ") + key);
        const Audio clean = read_wav(entry.at("clean").get<std::string>());
        const Audio processed = read_wav(entry.at("processed").get<std::string>());
        if (clean.sample_rate != processed.sample_rate)
            fail_data("eval: sample rate mismatch for " + entry.at("processed").get<std::string>());
        if (clean.num_channels() != processed.num_channels())
            fail_data("eval: channel count mismatch for " + entry.at("processed").get<std::string>());
        const long long n = std::min(clean.length(), processed.length());

        for (int c = 0; c < clean.num_channels(); ++c) {
            EvalRow row;
            row.system = entry.at("system").get<std::string>();
            row.channel = c;
            row.noise = entry.at("noise").get<std::string>();
            row.snr_db = entry.at("snr_db").get<double>();
            row.si_sdr = si_sdr(clean.channels[c].data(), processed.channels[c].data(), n);
            row.seg_snr = seg_snr(clean.channels[c].data(), processed.channels[c].data(), n);
            const std::vector<double> ref(clean.channels[c].begin(), clean.channels[c].begin() + n);
            const std::vector<double> est(processed.channels[c].begin(),
                                          processed.channels[c].begin() + n);
            row.stoi = stoi(ref, est, clean.sample_rate);
            report.rows.push_back(std::move(row));
        }
    }
    if (report.rows.empty()) fail_data("eval manifest has no entries");
    return report;
}

void write_report_files(const MetricsReport& report, const std::string& prefix) {
    write_file(prefix + "_results.csv", report.results_csv());
    write_file(prefix + "_summary.csv", report.summary_csv());
    write_file(prefix + "_summary.txt", report.summary_text());
    write_file(prefix + "_by_snr.csv", report.per_snr_csv());
    write_file(prefix + "_by_snr.txt", report.per_snr_text());
}

}  // namespace msce
