#pragma once

#include <map>
#include <string>
#include <vector>

#include "driveby/io.hpp"
#include "driveby/network.hpp"

namespace driveby::nn {

// DNW1 checkpoint: architecture description plus named f32 tensors, so a
// model can be rebuilt and refilled without any side channel. The config
// hash ties the weights back to the experiment configuration that made them.

namespace detail {

inline void write_stages(io::BinWriter& w, const std::vector<ConvStageSpec>& stages) {
    w.u32(static_cast<std::uint32_t>(stages.size()));
    for (const auto& s : stages) {
        w.u32(static_cast<std::uint32_t>(s.out_ch));
        w.u32(static_cast<std::uint32_t>(s.k));
        w.u8(s.pool ? 1 : 0);
    }
}

inline std::vector<ConvStageSpec> read_stages(io::BinReader& r) {
    std::vector<ConvStageSpec> stages(r.u32());
    for (auto& s : stages) {
        s.out_ch = static_cast<int>(r.u32());
        s.k = static_cast<int>(r.u32());
        s.pool = r.u8() != 0;
    }
    return stages;
}

inline void write_head(io::BinWriter& w, const HeadSpec& h) {
    write_stages(w, h.tail);
    w.u32(static_cast<std::uint32_t>(h.hidden));
    w.u32(static_cast<std::uint32_t>(h.out));
}

inline HeadSpec read_head(io::BinReader& r) {
    HeadSpec h;
    h.tail = read_stages(r);
    h.hidden = static_cast<int>(r.u32());
    h.out = static_cast<int>(r.u32());
    return h;
}

} // namespace detail

inline void save_checkpoint(io::BinWriter& w, Model<float>& model, std::uint64_t config_hash) {
    w.magic("DNW1");
    w.u16(kFormatVersion);
    w.u64(config_hash);
    w.str(model.topology);
    const ArchSpec& a = model.arch;
    w.u32(static_cast<std::uint32_t>(a.in_ch));
    w.u32(static_cast<std::uint32_t>(a.in_h));
    w.u32(static_cast<std::uint32_t>(a.in_w));
    detail::write_stages(w, a.trunk);
    detail::write_head(w, a.loc);
    detail::write_head(w, a.sev);
    detail::write_head(w, a.dom);
    std::vector<std::pair<std::string, Tensor<float>*>> named;
    model.named_tensors(named);
    w.u32(static_cast<std::uint32_t>(named.size()));
    for (auto& [name, t] : named) {
        w.str(name);
        w.u8(static_cast<std::uint8_t>(t->shape.size()));
        for (int d : t->shape) w.u32(static_cast<std::uint32_t>(d));
        w.f32s(t->data.data(), t->numel());
    }
}

inline void save_checkpoint(const std::string& path, Model<float>& model,
                            std::uint64_t config_hash) {
    io::BinWriter w(path);
    save_checkpoint(w, model, config_hash);
    w.commit();
}

inline Model<float> load_checkpoint(io::BinReader& r, const std::string& path,
                                    std::uint64_t* config_hash = nullptr) {
    r.expect_magic("DNW1");
    r.expect_version(kFormatVersion);
    const std::uint64_t hash = r.u64();
    if (config_hash) *config_hash = hash;
    const std::string topology = r.str();
    ArchSpec a;
    a.in_ch = static_cast<int>(r.u32());
    a.in_h = static_cast<int>(r.u32());
    a.in_w = static_cast<int>(r.u32());
    a.trunk = detail::read_stages(r);
    a.loc = detail::read_head(r);
    a.sev = detail::read_head(r);
    a.dom = detail::read_head(r);
    Model<float> model;
    model.init(a, topology, 0);
    std::vector<std::pair<std::string, Tensor<float>*>> named;
    model.named_tensors(named);
    std::map<std::string, Tensor<float>*> by_name(named.begin(), named.end());
    const std::uint32_t count = r.u32();
    if (count != named.size())
        throw DataError("checkpoint " + path + ": " + std::to_string(count) + " tensors, model has " +
                        std::to_string(named.size()));
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = r.str();
        auto it = by_name.find(name);
        if (it == by_name.end()) throw DataError("checkpoint " + path + ": unknown tensor " + name);
        std::vector<int> shape(r.u8());
        for (auto& d : shape) d = static_cast<int>(r.u32());
        if (shape != it->second->shape)
            throw DataError("checkpoint " + path + ": tensor " + name + " shape " + shape_str(shape) +
                            ", expected " + shape_str(it->second->shape));
        r.f32s(it->second->data.data(), it->second->numel());
    }
    return model;
}

inline Model<float> load_checkpoint(const std::string& path, std::uint64_t* config_hash = nullptr) {
    io::BinReader r(path);
    return load_checkpoint(r, path, config_hash);
}

} // namespace driveby::nn
