#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace scala::harness {

// One row of the metric stream, written after every outer step.
struct RunRecord {
    std::size_t step = 0;
    std::size_t epoch = 0;
    std::string mode;
    double lr = 0.0;
    double task_loss = 0.0;
    // Unscaled regularizer, averaged over micro-batches; 0 when inactive.
    double reg_value = 0.0;
    // Lambda that entered the loss this step: 0 while the gate is closed.
    double lambda = 0.0;
    bool adversary_active = false;
    double grad_norm = 0.0;
    double update_norm = 0.0;
    std::vector<double> group_update_norm;
    std::vector<double> group_nu;
    std::optional<double> train_acc;
    std::optional<double> test_acc;
    std::optional<double> sharpness;
    std::optional<double> moreau_sq_norm;
    // Cumulative over the run.
    std::uint64_t forward_passes = 0;
    std::uint64_t backward_passes = 0;
    double adv_max_deviation = 0.0;
    std::optional<double> wall_time;
};

nlohmann::json to_json(const RunRecord& r, const std::vector<std::string>& group_names);

// Same record stream with the mode label and wall time dropped.
bool same_metrics(const RunRecord& a, const RunRecord& b);

std::vector<std::string> csv_header(const std::vector<std::string>& group_names);
std::string csv_row(const RunRecord& r);

// Appends records to metrics.csv and metrics.jsonl under `dir`.
class MetricWriter {
public:
    MetricWriter(const std::filesystem::path& dir, std::vector<std::string> group_names, bool csv, bool jsonl);

    void write(const RunRecord& r);
    void flush();

private:
    std::vector<std::string> names_;
    std::ofstream csv_;
    std::ofstream jsonl_;
};

// "%.17g", so a value read back is the value written.
std::string format_double(double v);

} // namespace scala::harness
