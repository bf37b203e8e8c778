#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "scala/adversary/adversary.hpp"
#include "scala/model/model.hpp"
#include "scala/optimizer/optimizer.hpp"

namespace scala::harness {

enum class Mode { Baseline, Scala, NoDelay, Adam, NoPga, GaussianNoise, GtLabel };
enum class DatasetKind { TokenRule, GaussianBlobs, Regression };

const char* to_string(Mode mode) noexcept;
const char* to_string(DatasetKind kind) noexcept;
Mode parse_mode(const std::string& s);
DatasetKind parse_dataset_kind(const std::string& s);
const std::vector<Mode>& all_modes();

struct DatasetSpec {
    DatasetKind kind = DatasetKind::TokenRule;
    std::size_t train_size = 8192;
    std::size_t test_size = 2048;
    std::size_t vocab = 64;
    std::size_t seq_len = 8;
    // Size of each of the two keyword sets in token-rule.
    std::size_t keywords = 8;
    std::size_t features = 16;
    double separation = 3.0;
    double noise = 0.1;
    // Probability of flipping a training label.
    double label_noise = 0.0;
    // Falls back to the experiment seed.
    std::optional<std::uint64_t> seed;
};

struct ModelSpec {
    std::size_t embed_dim = 16;
    std::vector<std::size_t> hidden{32, 32};
    model::Activation activation = model::Activation::Tanh;
    bool attention = false;
    std::size_t classes = 2;
};

struct BatchGeometry {
    std::size_t workers = 4;
    std::size_t total = 512;
    std::size_t micro = 32;

    std::size_t micro_batches() const noexcept { return total / micro; }
    std::size_t micro_batches_per_worker() const noexcept { return total / (workers * micro); }
};

struct DiagnosticsConfig {
    // Step cadence; 0 disables.
    std::size_t sharpness_every = 0;
    std::size_t sharpness_iters = 100;
    double sharpness_tol = 1e-6;
    std::size_t sharpness_samples = 512;
    // Evaluated on this many disjoint training batches after the last step; 0 disables.
    std::size_t final_sharpness_batches = 5;
    std::size_t moreau_every = 0;
    std::size_t moreau_iters = 500;
    std::size_t moreau_samples = 512;
    // Same alpha for every group; probed per group when unset.
    std::optional<double> moreau_alpha;
};

struct OutputConfig {
    std::string dir;
    bool csv = true;
    bool jsonl = true;
    // Epoch cadence; 0 writes only the final checkpoint.
    std::size_t checkpoint_every = 0;
    bool wall_time = false;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    Mode mode = Mode::Scala;
    DatasetSpec dataset;
    ModelSpec model;
    opt::OuterOptConfig optimizer;
    adv::AdvNoiseConfig adversary;
    BatchGeometry batch;
    DiagnosticsConfig diagnostics;
    OutputConfig output;

    std::uint64_t dataset_seed() const noexcept { return dataset.seed.value_or(seed); }
    model::Architecture architecture() const;
    void validate() const;
};

// The full schema with every default; overrides and files must match its
// keys and value types.
nlohmann::json default_config_json();

ExperimentConfig parse_config(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& cfg);

// Merges `patch` into `base`, rejecting unknown keys and type mismatches.
void merge_config(nlohmann::json& base, const nlohmann::json& patch);
// `dotted.key=value`; the value is read as JSON when it parses, else as a string.
void apply_override(nlohmann::json& j, const std::string& assignment);

// Defaults, then the file (if any), then overrides in order.
ExperimentConfig load_config(const std::optional<std::filesystem::path>& file,
                             const std::vector<std::string>& overrides = {});
nlohmann::json load_config_json(const std::optional<std::filesystem::path>& file,
                                const std::vector<std::string>& overrides = {});

// Mode applied: baseline and no-pga zero lambda, no-delay opens the gate
// from epoch 0, adam swaps the optimizer, gt-label swaps the label source.
ExperimentConfig resolve_mode(const ExperimentConfig& cfg);

} // namespace scala::harness
