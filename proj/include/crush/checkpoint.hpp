#pragma once
// Checkpoint = one flat tensor [frequencies | parameters] next to a JSON
// sidecar holding the architecture and provenance. The tensor is float32 like
// every other artifact; reloaded weights round to ~1e-7 relative, far below
// any tolerance in the pipeline.

#include <filesystem>
#include <fstream>
#include <string>

#include "crush/config.hpp"
#include "crush/net.hpp"
#include "crush/tensor_file.hpp"

namespace crush {

inline void save_net(const std::filesystem::path& base, const FilmMlp& net, Json extra = {}) {
    Vec flat = net.frequencies();
    flat.insert(flat.end(), net.params().begin(), net.params().end());
    write_tensor(base.string() + ".crsh", tensor_from_flat(flat));

    const NetSpec& s = net.spec();
    Json side = {{"in", s.in},
                 {"out", s.out},
                 {"hidden", s.hidden},
                 {"depth", s.depth},
                 {"sigma_hidden", s.sigma_hidden},
                 {"freqs", s.freqs}};
    if (!extra.is_null())
        for (const auto& [k, v] : extra.items()) side[k] = v;
    write_text_atomic(base.string() + ".json", side.dump(2) + "\n");
}

inline FilmMlp load_net(const std::filesystem::path& base) {
    std::ifstream f(base.string() + ".json");
    if (!f) throw std::runtime_error("cannot open checkpoint sidecar " + base.string() + ".json");
    const Json side = Json::parse(f);
    NetSpec spec;
    spec.in = side.at("in").get<int>();
    spec.out = side.at("out").get<int>();
    spec.hidden = side.at("hidden").get<int>();
    spec.depth = side.at("depth").get<int>();
    spec.sigma_hidden = side.at("sigma_hidden").get<int>();
    spec.freqs = side.at("freqs").get<int>();

    Rng scratch(0);
    FilmMlp net(spec, scratch);
    const Tensor t = read_tensor(base.string() + ".crsh");
    const std::size_t nf = net.frequencies().size();
    if (t.dims.size() != 1 || t.data.size() != nf + net.params().size())
        throw std::runtime_error("checkpoint tensor does not match the sidecar architecture");
    Vec freqs(nf), params(net.params().size());
    for (std::size_t i = 0; i < nf; ++i) freqs[i] = static_cast<double>(t.data[i]);
    for (std::size_t i = 0; i < params.size(); ++i)
        params[i] = static_cast<double>(t.data[nf + i]);
    net.set_frequencies(std::move(freqs));
    net.set_params(std::move(params));
    return net;
}

}  // namespace crush
