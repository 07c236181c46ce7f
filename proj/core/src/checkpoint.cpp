#include "crowdkd/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

using nlohmann::json;

namespace crowdkd {

namespace {

constexpr char kMagic[4] = {'C', 'K', 'D', 'C'};
constexpr std::uint32_t kFormatVersion = 1;

json profile_to_json(const NetworkProfile& p) {
    json j;
    j["kind"] = profile_kind_name(p.kind);
    json enc = json::array();
    for (const auto& s : p.encoder) enc.push_back({s.convs, s.channels, s.dilation, s.pool_after ? 1 : 0});
    j["encoder"] = enc;
    json dec = json::array();
    for (const auto& c : p.decoder) dec.push_back({c.channels, c.kernel, c.dilation});
    j["decoder"] = dec;
    json taps = json::array();
    for (const auto& t : p.taps) taps.push_back({t.stage, t.conv});
    j["taps"] = taps;
    return j;
}

NetworkProfile profile_from_json(const json& j) {
    NetworkProfile p;
    p.kind = profile_kind_from_name(j.at("kind").get<std::string>());
    for (const auto& s : j.at("encoder")) {
        p.encoder.push_back({s.at(0).get<int>(), s.at(1).get<int>(), s.at(2).get<int>(), s.at(3).get<int>() != 0});
    }
    for (const auto& c : j.at("decoder")) {
        p.decoder.push_back({c.at(0).get<int>(), c.at(1).get<int>(), c.at(2).get<int>()});
    }
    for (const auto& t : j.at("taps")) p.taps.push_back({t.at(0).get<int>(), t.at(1).get<int>()});
    p.validate();
    return p;
}

json spec_to_json(const StudentSpec& s) {
    json j;
    j["cpr_denom"] = s.cpr_denom;
    j["teacher_kind"] = profile_kind_name(s.teacher_kind);
    json stages = json::array();
    for (const auto& st : s.stages) stages.push_back({st.expansion, st.blocks, st.stride, st.base_channels});
    j["stages"] = stages;
    j["decoder_base"] = s.decoder_base;
    return j;
}

StudentSpec spec_from_json(const json& j) {
    StudentSpec s;
    s.cpr_denom = j.at("cpr_denom").get<int>();
    s.teacher_kind = profile_kind_from_name(j.at("teacher_kind").get<std::string>());
    for (const auto& st : j.at("stages")) {
        s.stages.push_back({st.at(0).get<int>(), st.at(1).get<int>(), st.at(2).get<int>(), st.at(3).get<int>()});
    }
    s.decoder_base = j.at("decoder_base").get<std::vector<int>>();
    s.validate();
    return s;
}

void write_archive(const std::string& path, const json& header, const ParamStore& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    const std::string head = header.dump();
    const std::uint64_t head_len = head.size();
    out.write(kMagic, 4);
    out.write(reinterpret_cast<const char*>(&kFormatVersion), sizeof(kFormatVersion));
    out.write(reinterpret_cast<const char*>(&head_len), sizeof(head_len));
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    for (const auto& e : params.entries()) {
        const Tensor& t = e.var.value();
        out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("failed while writing checkpoint: " + path);
}

json tensor_index(const ParamStore& params) {
    json list = json::array();
    for (const auto& e : params.entries()) {
        list.push_back({{"name", e.name}, {"shape", e.var.value().shape()}});
    }
    return list;
}

struct RawArchive {
    json header;
    std::vector<char> blob;
};

RawArchive read_archive(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[4];
    std::uint32_t version = 0;
    std::uint64_t head_len = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    in.read(reinterpret_cast<char*>(&head_len), sizeof(head_len));
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error("not a checkpoint file: " + path);
    }
    if (version != kFormatVersion) {
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) + ": " + path);
    }
    std::string head(head_len, '\0');
    in.read(head.data(), static_cast<std::streamsize>(head_len));
    RawArchive a;
    try {
        a.header = json::parse(head);
    } catch (const json::exception& e) {
        throw std::runtime_error("corrupt checkpoint header in " + path + ": " + e.what());
    }
    if (!a.header.contains("version")) throw std::runtime_error("checkpoint header lacks a version: " + path);
    a.blob.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    return a;
}

void fill_params(ParamStore& params, const json& index, const std::vector<char>& blob, const std::string& path) {
    if (index.size() != params.entries().size()) {
        throw std::runtime_error("checkpoint parameter list does not match the model: " + path);
    }
    std::size_t offset = 0;
    for (std::size_t i = 0; i < index.size(); ++i) {
        const std::string name = index[i].at("name").get<std::string>();
        const auto shape = index[i].at("shape").get<std::vector<int>>();
        Var p = params.find(name);
        if (p.value().shape() != shape) {
            throw std::runtime_error("checkpoint tensor '" + name + "' has unexpected shape: " + path);
        }
        const std::size_t bytes = static_cast<std::size_t>(p.value().size()) * sizeof(double);
        if (offset + bytes > blob.size()) throw std::runtime_error("checkpoint data truncated: " + path);
        std::memcpy(p.mutable_value().data(), blob.data() + offset, bytes);
        offset += bytes;
    }
    if (offset != blob.size()) throw std::runtime_error("checkpoint has trailing data: " + path);
}

json base_header(const char* kind, int review_rounds) {
    json h;
    h["version"] = kFormatVersion;
    h["kind"] = kind;
    h["review_rounds"] = review_rounds;
    return h;
}

}  // namespace

void save_checkpoint(const std::string& path, const TeacherNet& net, int review_rounds) {
    json h = base_header("teacher", review_rounds);
    h["profile"] = profile_to_json(net.profile());
    h["tensors"] = tensor_index(net.params());
    write_archive(path, h, net.params());
}

void save_checkpoint(const std::string& path, const StudentNet& net, int review_rounds) {
    json h = base_header("student", review_rounds);
    h["spec"] = spec_to_json(net.spec());
    h["tensors"] = tensor_index(net.params());
    write_archive(path, h, net.params());
}

LoadedModel load_checkpoint(const std::string& path) {
    const RawArchive a = read_archive(path);
    LoadedModel m;
    m.kind = a.header.at("kind").get<std::string>();
    m.review_rounds = a.header.value("review_rounds", 0);

    if (m.kind == "teacher") {
        auto net = std::make_shared<TeacherNet>(profile_from_json(a.header.at("profile")), 0);
        fill_params(net->params(), a.header.at("tensors"), a.blob, path);
        m.network = net;
    } else if (m.kind == "student") {
        auto net = std::make_shared<StudentNet>(spec_from_json(a.header.at("spec")), 0);
        fill_params(net->params(), a.header.at("tensors"), a.blob, path);
        m.network = net;
    } else {
        throw std::runtime_error("unknown checkpoint kind '" + m.kind + "': " + path);
    }

    if (m.review_rounds > 0) {
        m.runner = std::make_shared<ReviewWrapper>(wrap_with_review(*m.network, m.review_rounds));
    } else {
        m.runner = m.network;
    }
    return m;
}

void set_review_rounds(const std::string& in_path, const std::string& out_path, int rounds) {
    if (rounds < 0) throw std::invalid_argument("review rounds must be >= 0");
    RawArchive a = read_archive(in_path);
    a.header["review_rounds"] = rounds;

    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + out_path);
    const std::string head = a.header.dump();
    const std::uint64_t head_len = head.size();
    out.write(kMagic, 4);
    out.write(reinterpret_cast<const char*>(&kFormatVersion), sizeof(kFormatVersion));
    out.write(reinterpret_cast<const char*>(&head_len), sizeof(head_len));
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    out.write(a.blob.data(), static_cast<std::streamsize>(a.blob.size()));
    if (!out) throw std::runtime_error("failed while writing checkpoint: " + out_path);
}

}  // namespace crowdkd
