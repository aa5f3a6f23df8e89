#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

namespace msce {

// One measurement: a (system, channel, noise type, SNR) condition. PESQ is
// never computed here; it can be merged in from an external CSV so the
// summary keeps the familiar PESQ column.
struct EvalRow {
    std::string system;
    int channel = 0;
    std::string noise;
    double snr_db = 0.0;
    double si_sdr = 0.0;
    double seg_snr = 0.0;
    double stoi = 0.0;
    double pesq = std::numeric_limits<double>::quiet_NaN();

    bool has_pesq() const { return !std::isnan(pesq); }
};

struct MetricsReport {
    std::vector<EvalRow> rows;

    std::string results_csv() const;
    // Systems x metrics, averaged over channels and conditions.
    std::string summary_csv() const;
    std::string summary_text() const;
    // Per-SNR breakdown per system.
    std::string per_snr_csv() const;
    std::string per_snr_text() const;
    nlohmann::json summary_json() const;

    // Attaches external PESQ scores. Columns: system, noise, snr_db, pesq,
    // optional channel; rows missing the channel column apply to every
    // channel of the matching condition.
    void merge_pesq_csv(const std::string& csv_text);
};

// Evaluates every manifest entry: per-channel SI-SDR, segSNR, and STOI of the
// processed signal against the clean reference. Entry fields:
// {system, clean, processed, noise, snr_db}.
MetricsReport run_eval(const std::string& eval_manifest_path);

// Writes <prefix>_results.csv, <prefix>_summary.{csv,txt} and
// <prefix>_by_snr.{csv,txt}.
void write_report_files(const MetricsReport& report, const std::string& prefix);

}  // namespace msce
