#include "scala/harness/config.hpp"

#include <fstream>

#include "scala/errors.hpp"

namespace scala::harness {

using nlohmann::json;

namespace {

constexpr std::pair<Mode, const char*> kModes[] = {
    {Mode::Baseline, "baseline"},
    {Mode::Scala, "scala"},
    {Mode::NoDelay, "ablation-no-delay"},
    {Mode::Adam, "ablation-adam"},
    {Mode::NoPga, "ablation-no-pga"},
    {Mode::GaussianNoise, "ablation-gaussian-noise"},
    {Mode::GtLabel, "ablation-gt-label"},
};

template <typename T>
T get(const json& j, const char* section, const char* key) {
    const json& v = section ? j.at(section).at(key) : j.at(key);
    try {
        return v.get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(section ? std::string(section) + "." + key : key, e.what());
    }
}

template <typename T>
std::optional<T> get_optional(const json& j, const char* section, const char* key) {
    const json& v = j.at(section).at(key);
    if (v.is_null())
        return std::nullopt;
    return get<T>(j, section, key);
}

template <typename Fn>
auto parse_enum(const json& j, const char* section, const char* key, Fn parse) {
    const std::string s = get<std::string>(j, section, key);
    try {
        return parse(s);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(section ? std::string(section) + "." + key : key, e.what());
    }
}

bool same_kind(const json& schema, const json& value) {
    if (schema.is_null())
        return value.is_null() || value.is_number();
    if (schema.is_number_unsigned())
        return value.is_number_unsigned();
    if (schema.is_number())
        return value.is_number();
    if (schema.is_array()) {
        if (!value.is_array())
            return false;
        for (const json& v : value)
            if (!v.is_number_unsigned())
                return false;
        return true;
    }
    return schema.type() == value.type();
}

void merge_at(json& base, const json& schema, const json& patch, const std::string& prefix) {
    if (!patch.is_object())
        throw ConfigError(prefix.empty() ? "<root>" : prefix, "expected an object");
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!schema.contains(it.key()))
            throw ConfigError(key, "unknown key");
        const json& expected = schema.at(it.key());
        if (expected.is_object()) {
            merge_at(base[it.key()], expected, it.value(), key);
            continue;
        }
        if (!same_kind(expected, it.value()))
            throw ConfigError(key, "expected " +
                                       std::string(expected.is_null() ? "number or null" : expected.type_name()) +
                                       ", got " + it.value().dump());
        base[it.key()] = it.value();
    }
}

} // namespace

const char* to_string(Mode mode) noexcept {
    for (const auto& [m, name] : kModes)
        if (m == mode)
            return name;
    return "?";
}

Mode parse_mode(const std::string& s) {
    for (const auto& [m, name] : kModes)
        if (s == name)
            return m;
    throw std::invalid_argument("unknown mode '" + s + "'");
}

const std::vector<Mode>& all_modes() {
    static const std::vector<Mode> modes = [] {
        std::vector<Mode> out;
        for (const auto& entry : kModes)
            out.push_back(entry.first);
        return out;
    }();
    return modes;
}

const char* to_string(DatasetKind kind) noexcept {
    switch (kind) {
    case DatasetKind::TokenRule:
        return "token-rule";
    case DatasetKind::GaussianBlobs:
        return "gaussian-blobs";
    case DatasetKind::Regression:
        return "regression";
    }
    return "?";
}

DatasetKind parse_dataset_kind(const std::string& s) {
    if (s == "token-rule")
        return DatasetKind::TokenRule;
    if (s == "gaussian-blobs")
        return DatasetKind::GaussianBlobs;
    if (s == "regression")
        return DatasetKind::Regression;
    throw std::invalid_argument("unknown dataset kind '" + s + "'");
}

model::Architecture ExperimentConfig::architecture() const {
    model::Architecture a;
    a.input = dataset.kind == DatasetKind::TokenRule ? model::InputKind::Tokens : model::InputKind::Features;
    a.task = dataset.kind == DatasetKind::Regression ? model::TaskKind::Regression : model::TaskKind::Classification;
    a.vocab = dataset.vocab;
    a.seq_len = dataset.seq_len;
    a.features = a.input == model::InputKind::Features ? dataset.features : 0;
    a.embed_dim = model.embed_dim;
    a.hidden = model.hidden;
    a.activation = model.activation;
    a.attention = model.attention;
    a.classes = model.classes;
    return a;
}

void ExperimentConfig::validate() const {
    if (dataset.train_size < 1)
        throw ConfigError("dataset.train-size", "must be positive");
    if (dataset.test_size < 1)
        throw ConfigError("dataset.test-size", "must be positive");
    if (dataset.kind == DatasetKind::TokenRule && 2 * dataset.keywords > dataset.vocab)
        throw ConfigError("dataset.keywords", "two keyword sets must fit in the vocabulary");
    if (dataset.kind == DatasetKind::TokenRule && dataset.keywords < 1)
        throw ConfigError("dataset.keywords", "must be positive");
    if (dataset.kind == DatasetKind::TokenRule && model.classes != 2)
        throw ConfigError("model.classes", "token-rule is a two-class task");
    if (dataset.kind == DatasetKind::GaussianBlobs && model.classes != 2)
        throw ConfigError("model.classes", "gaussian-blobs is a two-class task");
    if (!(dataset.label_noise >= 0.0 && dataset.label_noise <= 0.5))
        throw ConfigError("dataset.label-noise", "must lie in [0, 0.5]");
    if (!(dataset.noise >= 0.0))
        throw ConfigError("dataset.noise", "must be non-negative");
    if (dataset.kind == DatasetKind::Regression && model.attention)
        throw ConfigError("model.attention", "attention needs token input");
    if (dataset.kind != DatasetKind::TokenRule && model.attention)
        throw ConfigError("model.attention", "attention needs token input");
    if (batch.workers < 1)
        throw ConfigError("batch.workers", "must be positive");
    if (batch.micro < 1)
        throw ConfigError("batch.micro", "must be positive");
    if (batch.total < 1 || batch.total % (batch.workers * batch.micro) != 0)
        throw ConfigError("batch.total", "must be a positive multiple of workers * micro");
    if (batch.total > dataset.train_size)
        throw ConfigError("batch.total", "exceeds the training set");
    if (diagnostics.sharpness_samples < 1)
        throw ConfigError("diagnostics.sharpness-samples", "must be positive");
    if (diagnostics.moreau_samples < 1)
        throw ConfigError("diagnostics.moreau-samples", "must be positive");
    if (diagnostics.moreau_alpha && !(*diagnostics.moreau_alpha > 0.0))
        throw ConfigError("diagnostics.moreau-alpha", "must be positive");
    try {
        architecture().validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("model", e.what());
    }
    optimizer.validate();
    adversary.validate();
}

json default_config_json() {
    const ExperimentConfig d;
    return to_json(d);
}

json to_json(const ExperimentConfig& c) {
    auto opt = [](const auto& o) { return o ? json(*o) : json(nullptr); };
    return json{
        {"seed", c.seed},
        {"mode", to_string(c.mode)},
        {"dataset",
         {{"kind", to_string(c.dataset.kind)},
          {"train-size", c.dataset.train_size},
          {"test-size", c.dataset.test_size},
          {"vocab", c.dataset.vocab},
          {"seq-len", c.dataset.seq_len},
          {"keywords", c.dataset.keywords},
          {"features", c.dataset.features},
          {"separation", c.dataset.separation},
          {"noise", c.dataset.noise},
          {"label-noise", c.dataset.label_noise},
          {"seed", opt(c.dataset.seed)}}},
        {"model",
         {{"embed-dim", c.model.embed_dim},
          {"hidden", c.model.hidden},
          {"activation", to_string(c.model.activation)},
          {"attention", c.model.attention},
          {"classes", c.model.classes}}},
        {"optimizer",
         {{"kind", opt::to_string(c.optimizer.kind)},
          {"lr", c.optimizer.lr},
          {"warmup-ratio", c.optimizer.warmup_ratio},
          {"clip-lo", c.optimizer.clip_lo},
          {"clip-hi", c.optimizer.clip_hi},
          {"epochs", c.optimizer.epochs},
          {"theory-mode", c.optimizer.theory_mode},
          {"beta1", c.optimizer.beta1},
          {"beta2", c.optimizer.beta2},
          {"adam-eps", c.optimizer.adam_eps}}},
        {"adversary",
         {{"rho", c.adversary.rho},
          {"omega", c.adversary.omega},
          {"steps", c.adversary.steps},
          {"lambda", c.adversary.lambda},
          {"t-start", c.adversary.t_start},
          {"regularizer", adv::to_string(c.adversary.regularizer)},
          {"label-source", adv::to_string(c.adversary.label_source)},
          {"init-noise-std", opt(c.adversary.init_noise_std)}}},
        {"batch", {{"workers", c.batch.workers}, {"total", c.batch.total}, {"micro", c.batch.micro}}},
        {"diagnostics",
         {{"sharpness-every", c.diagnostics.sharpness_every},
          {"sharpness-iters", c.diagnostics.sharpness_iters},
          {"sharpness-tol", c.diagnostics.sharpness_tol},
          {"sharpness-samples", c.diagnostics.sharpness_samples},
          {"final-sharpness-batches", c.diagnostics.final_sharpness_batches},
          {"moreau-every", c.diagnostics.moreau_every},
          {"moreau-iters", c.diagnostics.moreau_iters},
          {"moreau-samples", c.diagnostics.moreau_samples},
          {"moreau-alpha", opt(c.diagnostics.moreau_alpha)}}},
        {"output",
         {{"dir", c.output.dir},
          {"csv", c.output.csv},
          {"jsonl", c.output.jsonl},
          {"checkpoint-every", c.output.checkpoint_every},
          {"wall-time", c.output.wall_time}}},
    };
}

ExperimentConfig parse_config(const json& j) {
    ExperimentConfig c;
    c.seed = get<std::uint64_t>(j, nullptr, "seed");
    c.mode = parse_enum(j, nullptr, "mode", parse_mode);

    c.dataset.kind = parse_enum(j, "dataset", "kind", parse_dataset_kind);
    c.dataset.train_size = get<std::size_t>(j, "dataset", "train-size");
    c.dataset.test_size = get<std::size_t>(j, "dataset", "test-size");
    c.dataset.vocab = get<std::size_t>(j, "dataset", "vocab");
    c.dataset.seq_len = get<std::size_t>(j, "dataset", "seq-len");
    c.dataset.keywords = get<std::size_t>(j, "dataset", "keywords");
    c.dataset.features = get<std::size_t>(j, "dataset", "features");
    c.dataset.separation = get<double>(j, "dataset", "separation");
    c.dataset.noise = get<double>(j, "dataset", "noise");
    c.dataset.label_noise = get<double>(j, "dataset", "label-noise");
    c.dataset.seed = get_optional<std::uint64_t>(j, "dataset", "seed");

    c.model.embed_dim = get<std::size_t>(j, "model", "embed-dim");
    c.model.hidden = get<std::vector<std::size_t>>(j, "model", "hidden");
    c.model.activation = parse_enum(j, "model", "activation", model::parse_activation);
    c.model.attention = get<bool>(j, "model", "attention");
    c.model.classes = get<std::size_t>(j, "model", "classes");

    c.optimizer.kind = parse_enum(j, "optimizer", "kind", opt::parse_optimizer_kind);
    c.optimizer.lr = get<double>(j, "optimizer", "lr");
    c.optimizer.warmup_ratio = get<double>(j, "optimizer", "warmup-ratio");
    c.optimizer.clip_lo = get<double>(j, "optimizer", "clip-lo");
    c.optimizer.clip_hi = get<double>(j, "optimizer", "clip-hi");
    c.optimizer.epochs = get<std::size_t>(j, "optimizer", "epochs");
    c.optimizer.theory_mode = get<bool>(j, "optimizer", "theory-mode");
    c.optimizer.beta1 = get<double>(j, "optimizer", "beta1");
    c.optimizer.beta2 = get<double>(j, "optimizer", "beta2");
    c.optimizer.adam_eps = get<double>(j, "optimizer", "adam-eps");

    c.adversary.rho = get<double>(j, "adversary", "rho");
    c.adversary.omega = get<double>(j, "adversary", "omega");
    c.adversary.steps = get<std::size_t>(j, "adversary", "steps");
    c.adversary.lambda = get<double>(j, "adversary", "lambda");
    c.adversary.t_start = get<std::size_t>(j, "adversary", "t-start");
    c.adversary.regularizer = parse_enum(j, "adversary", "regularizer", adv::parse_regularizer);
    c.adversary.label_source = parse_enum(j, "adversary", "label-source", adv::parse_label_source);
    c.adversary.init_noise_std = get_optional<double>(j, "adversary", "init-noise-std");

    c.batch.workers = get<std::size_t>(j, "batch", "workers");
    c.batch.total = get<std::size_t>(j, "batch", "total");
    c.batch.micro = get<std::size_t>(j, "batch", "micro");

    c.diagnostics.sharpness_every = get<std::size_t>(j, "diagnostics", "sharpness-every");
    c.diagnostics.sharpness_iters = get<std::size_t>(j, "diagnostics", "sharpness-iters");
    c.diagnostics.sharpness_tol = get<double>(j, "diagnostics", "sharpness-tol");
    c.diagnostics.sharpness_samples = get<std::size_t>(j, "diagnostics", "sharpness-samples");
    c.diagnostics.final_sharpness_batches = get<std::size_t>(j, "diagnostics", "final-sharpness-batches");
    c.diagnostics.moreau_every = get<std::size_t>(j, "diagnostics", "moreau-every");
    c.diagnostics.moreau_iters = get<std::size_t>(j, "diagnostics", "moreau-iters");
    c.diagnostics.moreau_samples = get<std::size_t>(j, "diagnostics", "moreau-samples");
    c.diagnostics.moreau_alpha = get_optional<double>(j, "diagnostics", "moreau-alpha");

    c.output.dir = get<std::string>(j, "output", "dir");
    c.output.csv = get<bool>(j, "output", "csv");
    c.output.jsonl = get<bool>(j, "output", "jsonl");
    c.output.checkpoint_every = get<std::size_t>(j, "output", "checkpoint-every");
    c.output.wall_time = get<bool>(j, "output", "wall-time");

    c.validate();
    return c;
}

void merge_config(json& base, const json& patch) {
    static const json schema = default_config_json();
    merge_at(base, schema, patch, "");
}

void apply_override(json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError(assignment, "override must look like key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded())
        value = text;

    json patch = value;
    std::vector<std::string> parts;
    for (std::size_t start = 0;;) {
        const auto dot = key.find('.', start);
        parts.push_back(key.substr(start, dot - start));
        if (dot == std::string::npos)
            break;
        start = dot + 1;
    }
    for (auto it = parts.rbegin(); it != parts.rend(); ++it)
        patch = json{{*it, patch}};
    merge_config(j, patch);
}

json load_config_json(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides) {
    json j = default_config_json();
    if (file) {
        std::ifstream in(*file);
        if (!in)
            throw ConfigError("--config", "cannot open " + file->string());
        json doc = json::parse(in, nullptr, false);
        if (doc.is_discarded())
            throw ConfigError("--config", file->string() + " is not valid JSON");
        merge_config(j, doc);
    }
    for (const std::string& o : overrides)
        apply_override(j, o);
    return j;
}

ExperimentConfig load_config(const std::optional<std::filesystem::path>& file,
                             const std::vector<std::string>& overrides) {
    return parse_config(load_config_json(file, overrides));
}

ExperimentConfig resolve_mode(const ExperimentConfig& cfg) {
    ExperimentConfig out = cfg;
    switch (cfg.mode) {
    case Mode::Baseline:
    case Mode::NoPga:
        out.adversary.lambda = 0.0;
        break;
    case Mode::NoDelay:
        out.adversary.t_start = 0;
        break;
    case Mode::Adam:
        out.optimizer.kind = opt::OptimizerKind::Adam;
        break;
    case Mode::GtLabel:
        out.adversary.label_source = adv::LabelSource::GroundTruth;
        break;
    case Mode::Scala:
    case Mode::GaussianNoise:
        break;
    }
    return out;
}

} // namespace scala::harness
