#include "vmclass/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "vmclass/error.hpp"

namespace vmclass::model {

using nlohmann::json;

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint64_t get_le(const std::string& in, std::size_t offset, int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) {
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
    }
    return v;
}

}  // namespace

json spec_to_json(const ModelSpec& spec) {
    return json{{"window", spec.window},
                {"metrics", spec.metrics},
                {"classes", spec.classes},
                {"kernel", spec.kernel},
                {"stride", spec.stride},
                {"padding", spec.padding},
                {"variant", std::string(variant_name(spec.variant))},
                {"blocks", spec.blocks()},
                {"channel_plan", spec.channel_plan}};
}

ModelSpec spec_from_json(const json& j) {
    try {
        ModelSpec spec;
        spec.window = j.at("window").get<std::size_t>();
        spec.metrics = j.at("metrics").get<std::size_t>();
        spec.classes = j.at("classes").get<std::size_t>();
        spec.kernel = j.at("kernel").get<std::size_t>();
        spec.stride = j.at("stride").get<std::size_t>();
        spec.padding = j.at("padding").get<std::size_t>();
        spec.variant = parse_variant(j.at("variant").get<std::string>());
        spec.channel_plan = j.at("channel_plan").get<std::vector<std::size_t>>();
        validate(spec);
        return spec;
    } catch (const json::exception& e) {
        throw FormatError(std::string("weight header: bad model spec: ") + e.what());
    } catch (const Error& e) {
        throw FormatError(std::string("weight header: bad model spec: ") + e.what());
    }
}

std::string serialize(const Network& net, const data::Normalizer* normalizer, const json& metadata) {
    const auto tensors = net.named_tensors();
    json header;
    header["format"] = "DVMW";
    header["version"] = kWeightVersion;
    header["spec"] = spec_to_json(net.spec());
    header["frontend"] = net.frontend() ? json("fft-magnitude") : json(nullptr);
    header["batchnorm"] = {{"momentum", net.blocks().front().norm.momentum},
                           {"epsilon", net.blocks().front().norm.epsilon}};
    json records = json::array();
    for (const auto& [name, tensor] : tensors) {
        records.push_back({{"name", name}, {"shape", tensor->shape()}, {"dtype", "f32"}});
    }
    header["tensors"] = std::move(records);
    if (normalizer) {
        header["normalizer"] = {{"mean", normalizer->mean}, {"std", normalizer->std}};
    }
    header["metadata"] = metadata;
    const std::string header_text = header.dump();

    std::string out(kWeightMagic, 4);
    put_u32(out, kWeightVersion);
    put_u64(out, header_text.size());
    out += header_text;
    for (const auto& [name, tensor] : tensors) {
        for (double v : tensor->data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    return out;
}

ModelFile deserialize(const std::string& bytes) {
    if (bytes.size() < 16) throw FormatError("weight file: truncated preamble");
    if (std::memcmp(bytes.data(), kWeightMagic, 4) != 0) throw FormatError("weight file: bad magic bytes");
    const auto version = static_cast<std::uint32_t>(get_le(bytes, 4, 4));
    if (version != kWeightVersion) {
        throw FormatError("weight file: unsupported version " + std::to_string(version));
    }
    const std::uint64_t header_size = get_le(bytes, 8, 8);
    if (header_size > bytes.size() - 16) throw FormatError("weight file: truncated header");

    json header;
    try {
        header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_size));
    } catch (const json::exception& e) {
        throw FormatError(std::string("weight file: unreadable header: ") + e.what());
    }

    if (!header.is_object() || !header.contains("spec")) throw FormatError("weight header: missing model spec");
    ModelFile file;
    file.network = Network::build(spec_from_json(header["spec"]), 0);
    auto tensors = file.network.named_tensors();
    json records;
    try {
        records = header.at("tensors");
        if (!records.is_array()) throw FormatError("weight header: 'tensors' is not a list");
        if (records.size() != tensors.size()) {
            throw FormatError("weight header: declares " + std::to_string(records.size()) +
                              " tensors, model spec needs " + std::to_string(tensors.size()));
        }
        std::size_t payload_values = 0;
        for (std::size_t i = 0; i < records.size(); ++i) {
            const auto& record = records[i];
            const auto name = record.at("name").get<std::string>();
            const auto shape = record.at("shape").get<Shape>();
            if (record.at("dtype").get<std::string>() != "f32") {
                throw FormatError("weight header: tensor '" + name + "' is not f32");
            }
            if (name != tensors[i].name || shape != tensors[i].tensor->shape()) {
                throw FormatError("weight header: record " + std::to_string(i) + " '" + name + "' " +
                                  shape_to_string(shape) + " disagrees with expected '" + tensors[i].name +
                                  "' " + shape_to_string(tensors[i].tensor->shape()));
            }
            payload_values += shape_size(shape);
        }
        const std::size_t payload_bytes = bytes.size() - 16 - header_size;
        if (payload_bytes != payload_values * 4) {
            throw FormatError("weight file: payload holds " + std::to_string(payload_bytes) +
                              " bytes, header declares " + std::to_string(payload_values * 4));
        }
        if (header.contains("normalizer")) {
            data::Normalizer norm;
            norm.mean = header["normalizer"].at("mean").get<std::vector<double>>();
            norm.std = header["normalizer"].at("std").get<std::vector<double>>();
            if (norm.mean.size() != file.network.spec().metrics || norm.std.size() != norm.mean.size()) {
                throw FormatError("weight header: normalizer size disagrees with the model spec");
            }
            file.normalizer = std::move(norm);
        }
        if (header.contains("batchnorm")) {
            const double momentum = header["batchnorm"].at("momentum").get<double>();
            const double epsilon = header["batchnorm"].at("epsilon").get<double>();
            for (auto& block : file.network.blocks()) {
                block.norm.momentum = momentum;
                block.norm.epsilon = epsilon;
            }
        }
        if (header.contains("metadata")) file.metadata = header["metadata"];
    } catch (const json::exception& e) {
        throw FormatError(std::string("weight header: ") + e.what());
    }

    std::size_t offset = 16 + header_size;
    for (auto& [name, tensor] : tensors) {
        for (double& v : tensor->data()) {
            v = static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(get_le(bytes, offset, 4))));
            offset += 4;
        }
    }
    return file;
}

void save(const Network& net, const std::filesystem::path& path, const data::Normalizer* normalizer,
          const json& metadata) {
    const std::string bytes = serialize(net, normalizer, metadata);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write weight file " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing weight file " + path.string());
}

ModelFile load_model_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open weight file " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    try {
        return deserialize(buffer.str());
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

Network load(const std::filesystem::path& path) { return load_model_file(path).network; }

void round_to_storage_precision(Network& net) {
    for (auto& [name, tensor] : net.named_tensors()) {
        for (double& v : tensor->data()) v = static_cast<double>(static_cast<float>(v));
    }
}

}  // namespace vmclass::model
