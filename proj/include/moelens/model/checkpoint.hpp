#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "moelens/model/model.hpp"

namespace moelens {

// Checkpoint = text manifest (version, config, tensor table) plus one binary
// blob of little-endian float32 values in manifest order.
inline void save_checkpoint(Model& model, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    auto params = model.params();

    std::ofstream blob(fs::path(dir) / "weights.bin", std::ios::binary);
    if (!blob) throw std::runtime_error("cannot write checkpoint blob in " + dir);
    std::ofstream man(fs::path(dir) / "manifest.txt", std::ios::binary);
    if (!man) throw std::runtime_error("cannot write checkpoint manifest in " + dir);

    man << "moelens-checkpoint v1\n";
    man << "config " << model.config().to_json().dump() << "\n";
    std::size_t offset = 0;
    for (const auto& p : params) {
        man << "tensor " << p.name << " " << p.value->rank();
        for (auto dim : p.value->shape()) man << " " << dim;
        man << " " << offset << "\n";
        for (std::size_t i = 0; i < p.value->size(); ++i) {
            float f = static_cast<float>((*p.value)[i]);
            static_assert(sizeof(f) == 4);
            char buf[4];
            std::memcpy(buf, &f, 4);
            blob.write(buf, 4);
        }
        offset += p.value->size();
    }
    man << "end\n";
    if (!man || !blob) throw std::runtime_error("checkpoint write failed in " + dir);
}

inline Model load_checkpoint(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream man(fs::path(dir) / "manifest.txt", std::ios::binary);
    if (!man) throw std::runtime_error("cannot open checkpoint manifest in " + dir);
    std::string line;
    if (!std::getline(man, line) || line != "moelens-checkpoint v1")
        throw std::runtime_error("unrecognized checkpoint manifest in " + dir);
    if (!std::getline(man, line) || line.rfind("config ", 0) != 0)
        throw std::runtime_error("checkpoint manifest missing config line");
    ModelConfig cfg = ModelConfig::from_json(nlohmann::json::parse(line.substr(7)));
    Model model(cfg);

    std::ifstream blob(fs::path(dir) / "weights.bin", std::ios::binary);
    if (!blob) throw std::runtime_error("cannot open checkpoint blob in " + dir);

    auto params = model.params();
    std::size_t next = 0;
    while (std::getline(man, line)) {
        if (line == "end") break;
        std::istringstream ss(line);
        std::string kw, name;
        std::size_t rank;
        ss >> kw >> name >> rank;
        if (kw != "tensor") throw std::runtime_error("bad manifest line: " + line);
        std::vector<std::size_t> shape(rank);
        std::size_t offset;
        for (auto& d : shape) ss >> d;
        ss >> offset;
        if (next >= params.size() || params[next].name != name ||
            params[next].value->shape() != shape)
            throw std::runtime_error("checkpoint tensor mismatch at '" + name + "'");
        blob.seekg(static_cast<std::streamoff>(offset) * 4);
        Tensor& t = *params[next].value;
        std::vector<char> buf(t.size() * 4);
        blob.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!blob) throw std::runtime_error("checkpoint blob truncated at '" + name + "'");
        for (std::size_t i = 0; i < t.size(); ++i) {
            float f;
            std::memcpy(&f, buf.data() + i * 4, 4);
            t[i] = static_cast<double>(f);
        }
        ++next;
    }
    if (next != params.size())
        throw std::runtime_error("checkpoint manifest lists fewer tensors than expected");
    return model;
}

}  // namespace moelens
