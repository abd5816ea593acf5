#include "flowlab/core/checkpoint.hpp"

#include <cstdint>
#include <fstream>
#include <vector>

namespace flowlab::ckpt {

namespace {

constexpr char kMagic[8] = {'F', 'L', 'W', 'L', 'C', 'K', 'P', '1'};

[[noreturn]] void fail(const std::string& what) {
    throw std::runtime_error("checkpoint: " + what);
}

nlohmann::json shape_json(const std::vector<int>& shape) {
    return nlohmann::json(shape);
}

std::string shape_str(const nlohmann::json& shape) {
    return shape.dump();
}

nlohmann::json read_header(std::ifstream& in, const std::string& path) {
    char magic[8];
    if (!in.read(magic, 8)) fail("cannot read " + path);
    if (!std::equal(magic, magic + 8, kMagic)) fail("bad magic in " + path);
    std::uint32_t hlen = 0;
    if (!in.read(reinterpret_cast<char*>(&hlen), 4)) fail("truncated header in " + path);
    std::string htext(hlen, '\0');
    if (!in.read(htext.data(), hlen)) fail("truncated header in " + path);
    nlohmann::json h = nlohmann::json::parse(htext, nullptr, false);
    if (h.is_discarded() || !h.is_object() || !h.contains("kind") || !h.contains("tensors"))
        fail("corrupt header in " + path);
    return h;
}

}  // namespace

void save(const std::string& path, const std::string& kind, const nlohmann::json& extra,
          const nn::ParamRefs<float>& params) {
    nlohmann::json header;
    header["kind"] = kind;
    header["tensors"] = nlohmann::json::array();
    for (const auto* p : params)
        header["tensors"].push_back({{"name", p->name}, {"shape", shape_json(p->value.shape())}});
    header["extra"] = extra;

    const std::string htext = header.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail("cannot open " + path + " for writing");
    out.write(kMagic, 8);
    const std::uint32_t hlen = static_cast<std::uint32_t>(htext.size());
    out.write(reinterpret_cast<const char*>(&hlen), 4);
    out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    for (const auto* p : params)
        out.write(reinterpret_cast<const char*>(p->value.data()),
                  static_cast<std::streamsize>(p->value.size() * sizeof(float)));
    if (!out) fail("write failed for " + path);
}

nlohmann::json peek(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open " + path);
    return read_header(in, path);
}

nlohmann::json load(const std::string& path, const std::string& kind,
                    const nn::ParamRefs<float>& params) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open " + path);
    nlohmann::json header = read_header(in, path);

    if (header["kind"].get<std::string>() != kind)
        fail("kind mismatch in " + path + ": have \"" + header["kind"].get<std::string>() +
             "\", expected \"" + kind + "\"");
    const auto& tensors = header["tensors"];
    if (tensors.size() != params.size())
        fail("tensor count mismatch in " + path + ": have " + std::to_string(tensors.size()) +
             ", expected " + std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& t = tensors[i];
        if (t["name"].get<std::string>() != params[i]->name)
            fail("tensor " + std::to_string(i) + " name mismatch in " + path + ": have \"" +
                 t["name"].get<std::string>() + "\", expected \"" + params[i]->name + "\"");
        if (t["shape"].get<std::vector<int>>() != params[i]->value.shape())
            fail("tensor \"" + params[i]->name + "\" shape mismatch in " + path + ": have " +
                 shape_str(t["shape"]) + ", expected " +
                 shape_str(shape_json(params[i]->value.shape())));
    }

    // Descriptor fully validated; now (and only now) read the data.
    for (auto* p : params) {
        if (!in.read(reinterpret_cast<char*>(p->value.data()),
                     static_cast<std::streamsize>(p->value.size() * sizeof(float))))
            fail("truncated tensor data in " + path + " at \"" + p->name + "\"");
    }
    char excess;
    if (in.read(&excess, 1)) fail("trailing bytes in " + path);
    return header.contains("extra") ? header["extra"] : nlohmann::json::object();
}

}  // namespace flowlab::ckpt
