#include "scala/model/checkpoint.hpp"

#include <fstream>

#include "scala/errors.hpp"

namespace scala::model {

using nlohmann::json;

json architecture_to_json(const Architecture& arch) {
    return json{{"input", to_string(arch.input)},
                {"task", to_string(arch.task)},
                {"vocab", arch.vocab},
                {"embed-dim", arch.embed_dim},
                {"seq-len", arch.seq_len},
                {"features", arch.features},
                {"hidden", arch.hidden},
                {"activation", to_string(arch.activation)},
                {"attention", arch.attention},
                {"classes", arch.classes}};
}

Architecture architecture_from_json(const json& j) {
    Architecture a;
    a.input = parse_input_kind(j.at("input").get<std::string>());
    a.task = parse_task_kind(j.at("task").get<std::string>());
    a.vocab = j.at("vocab").get<std::size_t>();
    a.embed_dim = j.at("embed-dim").get<std::size_t>();
    a.seq_len = j.at("seq-len").get<std::size_t>();
    a.features = j.at("features").get<std::size_t>();
    a.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    a.activation = parse_activation(j.at("activation").get<std::string>());
    a.attention = j.at("attention").get<bool>();
    a.classes = j.at("classes").get<std::size_t>();
    return a;
}

json to_json(const Model& model) {
    json tensors = json::array();
    for (const ParamGroup& g : model.groups()) {
        for (const TensorSlot& s : g.tensors) {
            auto values = model.parameters().subspan(s.offset, s.size);
            tensors.push_back({{"group", g.name},
                               {"name", s.name},
                               {"shape", s.shape},
                               {"data", std::vector<double>(values.begin(), values.end())}});
        }
    }
    return json{{"format", "scala-checkpoint"},
                {"version", kCheckpointVersion},
                {"arch", architecture_to_json(model.arch())},
                {"tensors", std::move(tensors)}};
}

Model from_json(const json& j) {
    if (j.value("format", "") != "scala-checkpoint")
        throw std::invalid_argument("not a checkpoint document");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion)
        throw std::invalid_argument("unsupported checkpoint version " + std::to_string(version));

    Model skeleton(architecture_from_json(j.at("arch")));
    std::vector<double> params(skeleton.parameter_count());
    const json& tensors = j.at("tensors");
    std::size_t k = 0;
    for (const ParamGroup& g : skeleton.groups()) {
        for (const TensorSlot& s : g.tensors) {
            if (k >= tensors.size())
                throw ShapeError("checkpoint is missing tensors");
            const json& t = tensors[k++];
            if (t.at("group").get<std::string>() != g.name || t.at("name").get<std::string>() != s.name ||
                t.at("shape").get<ad::Shape>() != s.shape)
                throw ShapeError("checkpoint tensor " + g.name + "." + s.name + " does not match architecture");
            const auto data = t.at("data").get<std::vector<double>>();
            if (data.size() != s.size)
                throw ShapeError("checkpoint tensor " + g.name + "." + s.name + " has wrong length");
            std::copy(data.begin(), data.end(), params.begin() + static_cast<std::ptrdiff_t>(s.offset));
        }
    }
    if (k != tensors.size())
        throw ShapeError("checkpoint has extra tensors");
    skeleton.set_parameters(params);
    return skeleton;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write checkpoint " + path.string());
    out << to_json(model).dump() << '\n';
}

Model load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot read checkpoint " + path.string());
    return from_json(json::parse(in));
}

} // namespace scala::model
