#include "scala/cli/manifest.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace scala::cli {

std::string sha256_hex(const std::string& bytes) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1)
        throw std::runtime_error("sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xf];
    }
    return out;
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return sha256_hex(ss.str());
}

std::map<std::string, std::string> hash_artifacts(const std::filesystem::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (entry.is_regular_file() && name != "manifest.json")
            out[name] = sha256_file(entry.path());
    }
    return out;
}

nlohmann::json make_manifest(const std::string& verb, const nlohmann::json& resolved_config,
                             const std::map<std::string, std::string>& artifacts) {
    return {{"format", "scala-opt-manifest"},
            {"version", kManifestVersion},
            {"verb", verb},
            {"seed", resolved_config.at("seed")},
            {"config", resolved_config},
            {"artifacts", artifacts}};
}

void write_manifest(const std::filesystem::path& dir, const nlohmann::json& manifest) {
    std::ofstream out(dir / "manifest.json");
    if (!out)
        throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(2) << '\n';
}

nlohmann::json read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot read manifest " + path.string());
    nlohmann::json j = nlohmann::json::parse(in);
    if (j.value("format", "") != "scala-opt-manifest")
        throw std::runtime_error(path.string() + " is not a scala-opt manifest");
    if (j.value("version", 0) != kManifestVersion)
        throw std::runtime_error("unsupported manifest version");
    return j;
}

} // namespace scala::cli
