#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace moelens {

// FNV-1a, enough to detect accidental artifact drift in manifests.
inline std::uint64_t fnv1a_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot checksum file: " + path);
    std::uint64_t h = 1469598103934665603ull;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
        if (!in) break;
    }
    return h;
}

// Per-command run record: resolved configuration, inputs, seed, and artifact
// checksums. Written atomically (temp file + rename) before outputs, then
// updated with output checksums once the run completes.
class RunManifest {
public:
    RunManifest(std::string command, std::string out_dir)
        : out_dir_(std::move(out_dir)) {
        doc_["command"] = std::move(command);
        doc_["inputs"] = nlohmann::json::object();
        doc_["outputs"] = nlohmann::json::object();
    }

    void set_config(const nlohmann::json& cfg) { doc_["config"] = cfg; }
    void set_seed(std::uint64_t seed) { doc_["seed"] = seed; }

    void add_input(const std::string& name, const std::string& path) {
        doc_["inputs"][name] = {{"path", path},
                                {"fnv1a", std::to_string(fnv1a_file(path))}};
    }

    void add_output(const std::string& name, const std::string& path) {
        doc_["outputs"][name] = {{"path", path},
                                 {"fnv1a", std::to_string(fnv1a_file(path))}};
    }

    void write() const {
        namespace fs = std::filesystem;
        fs::create_directories(out_dir_);
        const fs::path final_path = fs::path(out_dir_) / "manifest.json";
        const fs::path tmp_path = fs::path(out_dir_) / "manifest.json.tmp";
        {
            std::ofstream out(tmp_path, std::ios::binary);
            if (!out) throw std::runtime_error("cannot write manifest in " + out_dir_);
            out << doc_.dump(2) << "\n";
        }
        fs::rename(tmp_path, final_path);
    }

private:
    std::string out_dir_;
    nlohmann::json doc_;
};

}  // namespace moelens
