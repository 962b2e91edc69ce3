// SPDX-License-Identifier: Apache-2.0

#include "plr/checkpoint.hpp"

#include <fstream>

#include "plr/errors.hpp"

namespace plr::checkpoint {

using nlohmann::json;

json to_json(const Checkpoint& ckpt)
{
    json layers = json::array();
    for (const auto& layer : ckpt.params.layers) {
        json weight = json::array();
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
            json row = json::array();
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
                row.push_back(layer.weight(r, c));
            }
            weight.push_back(std::move(row));
        }
        json bias = json::array();
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
            bias.push_back(layer.bias(i));
        }
        layers.push_back({{"in", layer.weight.cols()}, {"out", layer.weight.rows()}, {"weight", weight}, {"bias", bias}});
    }
    json standardizer = json::array();
    for (const auto& f : ckpt.standardizer.features) {
        standardizer.push_back({{"location", f.location}, {"scale", f.scale}});
    }
    return {{"format_version", kFormatVersion},
            {"config_hash", ckpt.config_hash},
            {"seed", ckpt.seed},
            {"steps_completed", ckpt.steps_completed},
            {"final_loss", ckpt.final_loss},
            {"standardizer", standardizer},
            {"network", {{"hidden_activation", "tanh"}, {"output_activation", "sigmoid"}, {"layers", layers}}},
            {"config", ckpt.config}};
}

Checkpoint from_json(const json& j)
{
    try {
        if (j.at("format_version").get<std::string>() != kFormatVersion) {
            throw InputError("checkpoint format version '" + j.at("format_version").get<std::string>() +
                             "' is not supported (expected " + kFormatVersion + ")");
        }
        Checkpoint ckpt;
        ckpt.config_hash = j.at("config_hash").get<std::string>();
        ckpt.seed = j.at("seed").get<std::uint64_t>();
        ckpt.steps_completed = j.at("steps_completed").get<long>();
        ckpt.final_loss = j.at("final_loss").get<double>();
        ckpt.config = j.at("config");
        const json& st = j.at("standardizer");
        if (st.size() != 3) {
            throw InputError("checkpoint standardizer must have 3 entries");
        }
        for (std::size_t i = 0; i < 3; ++i) {
            ckpt.standardizer.features[i] = {st[i].at("location").get<double>(), st[i].at("scale").get<double>()};
        }
        const json& net = j.at("network");
        if (net.at("hidden_activation") != "tanh" || net.at("output_activation") != "sigmoid") {
            throw InputError("checkpoint activations must be tanh/sigmoid");
        }
        for (const auto& lj : net.at("layers")) {
            const auto in = lj.at("in").get<Eigen::Index>();
            const auto out = lj.at("out").get<Eigen::Index>();
            const json& w = lj.at("weight");
            const json& b = lj.at("bias");
            if (static_cast<Eigen::Index>(w.size()) != out || static_cast<Eigen::Index>(b.size()) != out) {
                throw DimensionError("checkpoint layer shape metadata does not match its arrays");
            }
            nn::DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd(out)};
            for (Eigen::Index r = 0; r < out; ++r) {
                const json& row = w[static_cast<std::size_t>(r)];
                if (static_cast<Eigen::Index>(row.size()) != in) {
                    throw DimensionError("checkpoint layer shape metadata does not match its arrays");
                }
                for (Eigen::Index c = 0; c < in; ++c) {
                    layer.weight(r, c) = row[static_cast<std::size_t>(c)].get<double>();
                }
                layer.bias(r) = b[static_cast<std::size_t>(r)].get<double>();
            }
            ckpt.params.layers.push_back(std::move(layer));
        }
        ckpt.params.validate();
        return ckpt;
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed checkpoint: ") + e.what());
    }
}

void save(const std::string& path, const Checkpoint& ckpt)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw InputError("cannot write checkpoint '" + path + "'");
    }
    out << to_json(ckpt).dump(1) << "\n";
    if (!out) {
        throw InputError("failed writing checkpoint '" + path + "'");
    }
}

Checkpoint load(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InputError("cannot open checkpoint '" + path + "'");
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw InputError("checkpoint '" + path + "' is not valid JSON: " + e.what());
    }
    return from_json(j);
}

} // namespace plr::checkpoint
