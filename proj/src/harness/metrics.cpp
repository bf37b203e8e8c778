#include "scala/harness/metrics.hpp"

#include <cstdio>
#include <stdexcept>

namespace scala::harness {
namespace {

nlohmann::json opt_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::string opt_cell(const std::optional<double>& v) {
    return v ? format_double(*v) : std::string();
}

} // namespace

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

nlohmann::json to_json(const RunRecord& r, const std::vector<std::string>& group_names) {
    nlohmann::json j = {
        {"step", r.step},
        {"epoch", r.epoch},
        {"mode", r.mode},
        {"lr", r.lr},
        {"task_loss", r.task_loss},
        {"reg_value", r.reg_value},
        {"lambda", r.lambda},
        {"adversary_active", r.adversary_active},
        {"grad_norm", r.grad_norm},
        {"update_norm", r.update_norm},
    };
    for (std::size_t i = 0; i < group_names.size(); ++i) {
        j["update_norm_" + group_names[i]] = i < r.group_update_norm.size() ? nlohmann::json(r.group_update_norm[i])
                                                                           : nlohmann::json(nullptr);
        const bool has_nu = i < r.group_nu.size() && r.group_nu[i] == r.group_nu[i];
        j["nu_" + group_names[i]] = has_nu ? nlohmann::json(r.group_nu[i]) : nlohmann::json(nullptr);
    }
    j["train_acc"] = opt_json(r.train_acc);
    j["test_acc"] = opt_json(r.test_acc);
    j["sharpness"] = opt_json(r.sharpness);
    j["moreau_sq_norm"] = opt_json(r.moreau_sq_norm);
    j["forward_passes"] = r.forward_passes;
    j["backward_passes"] = r.backward_passes;
    j["adv_max_deviation"] = r.adv_max_deviation;
    j["wall_time"] = opt_json(r.wall_time);
    return j;
}

bool same_metrics(const RunRecord& a, const RunRecord& b) {
    RunRecord x = a, y = b;
    x.mode.clear();
    y.mode.clear();
    x.wall_time.reset();
    y.wall_time.reset();
    // NaN nu values (Adam) compare unequal, so compare them by bit pattern.
    auto nan_safe = [](std::vector<double>& v) {
        for (double& d : v)
            if (d != d)
                d = 0.0;
    };
    nan_safe(x.group_nu);
    nan_safe(y.group_nu);
    return x.step == y.step && x.epoch == y.epoch && x.lr == y.lr && x.task_loss == y.task_loss &&
           x.reg_value == y.reg_value && x.lambda == y.lambda && x.adversary_active == y.adversary_active &&
           x.grad_norm == y.grad_norm && x.update_norm == y.update_norm &&
           x.group_update_norm == y.group_update_norm && x.group_nu == y.group_nu && x.train_acc == y.train_acc &&
           x.test_acc == y.test_acc && x.sharpness == y.sharpness && x.moreau_sq_norm == y.moreau_sq_norm &&
           x.forward_passes == y.forward_passes && x.backward_passes == y.backward_passes &&
           x.adv_max_deviation == y.adv_max_deviation;
}

std::vector<std::string> csv_header(const std::vector<std::string>& group_names) {
    std::vector<std::string> h = {"step",      "epoch",       "mode",     "lr",
                                  "task_loss", "reg_value",   "lambda",   "adversary_active",
                                  "grad_norm", "update_norm"};
    for (const std::string& n : group_names)
        h.push_back("update_norm_" + n);
    for (const std::string& n : group_names)
        h.push_back("nu_" + n);
    for (const char* c : {"train_acc", "test_acc", "sharpness", "moreau_sq_norm", "forward_passes",
                          "backward_passes", "adv_max_deviation", "wall_time"})
        h.emplace_back(c);
    return h;
}

std::string csv_row(const RunRecord& r) {
    std::vector<std::string> cells = {std::to_string(r.step),
                                      std::to_string(r.epoch),
                                      r.mode,
                                      format_double(r.lr),
                                      format_double(r.task_loss),
                                      format_double(r.reg_value),
                                      format_double(r.lambda),
                                      r.adversary_active ? "1" : "0",
                                      format_double(r.grad_norm),
                                      format_double(r.update_norm)};
    for (double v : r.group_update_norm)
        cells.push_back(format_double(v));
    for (double v : r.group_nu)
        cells.push_back(v == v ? format_double(v) : std::string());
    cells.push_back(opt_cell(r.train_acc));
    cells.push_back(opt_cell(r.test_acc));
    cells.push_back(opt_cell(r.sharpness));
    cells.push_back(opt_cell(r.moreau_sq_norm));
    cells.push_back(std::to_string(r.forward_passes));
    cells.push_back(std::to_string(r.backward_passes));
    cells.push_back(format_double(r.adv_max_deviation));
    cells.push_back(opt_cell(r.wall_time));
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i)
            line += ',';
        line += cells[i];
    }
    return line;
}

MetricWriter::MetricWriter(const std::filesystem::path& dir, std::vector<std::string> group_names, bool csv,
                           bool jsonl)
    : names_(std::move(group_names)) {
    std::filesystem::create_directories(dir);
    if (csv) {
        csv_.open(dir / "metrics.csv");
        if (!csv_)
            throw std::runtime_error("cannot open " + (dir / "metrics.csv").string());
        const auto header = csv_header(names_);
        for (std::size_t i = 0; i < header.size(); ++i)
            csv_ << (i ? "," : "") << header[i];
        csv_ << '\n';
    }
    if (jsonl) {
        jsonl_.open(dir / "metrics.jsonl");
        if (!jsonl_)
            throw std::runtime_error("cannot open " + (dir / "metrics.jsonl").string());
    }
}

void MetricWriter::write(const RunRecord& r) {
    if (csv_.is_open())
        csv_ << csv_row(r) << '\n';
    if (jsonl_.is_open())
        jsonl_ << to_json(r, names_).dump() << '\n';
}

void MetricWriter::flush() {
    if (csv_.is_open())
        csv_.flush();
    if (jsonl_.is_open())
        jsonl_.flush();
}

} // namespace scala::harness
