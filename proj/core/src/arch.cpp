#include "crowdkd/arch.hpp"

#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

namespace crowdkd {

const char* profile_kind_name(ProfileKind k) {
    switch (k) {
        case ProfileKind::csrnet_like: return "csrnet_like";
        case ProfileKind::bl_like: return "bl_like";
        case ProfileKind::toy: return "toy";
    }
    return "?";
}

ProfileKind profile_kind_from_name(const std::string& name) {
    if (name == "csrnet_like") return ProfileKind::csrnet_like;
    if (name == "bl_like") return ProfileKind::bl_like;
    if (name == "toy") return ProfileKind::toy;
    throw std::invalid_argument("unknown profile kind: " + name);
}

NetworkProfile NetworkProfile::csrnet_like() {
    NetworkProfile p;
    p.kind = ProfileKind::csrnet_like;
    p.encoder = {{2, 64, 1, true}, {2, 128, 1, true}, {3, 256, 1, true}, {3, 512, 1, false}};
    p.decoder = {{512, 3, 2}, {512, 3, 2}, {512, 3, 2}, {256, 3, 2}, {128, 3, 2}, {64, 3, 2}, {1, 1, 1}};
    p.taps = {{1, 1}, {1, 2}, {2, 2}, {3, 3}, {4, 3}};
    return p;
}

NetworkProfile NetworkProfile::bl_like() {
    NetworkProfile p;
    p.kind = ProfileKind::bl_like;
    p.encoder = {{2, 64, 1, true}, {2, 128, 1, true}, {4, 256, 1, true}, {4, 512, 1, true}, {4, 512, 1, false}};
    p.decoder = {{256, 3, 1}, {128, 3, 1}, {1, 1, 1}};
    p.taps = {{1, 1}, {1, 2}, {2, 2}, {3, 3}, {4, 3}, {5, 4}};
    return p;
}

NetworkProfile NetworkProfile::toy() {
    NetworkProfile p;
    p.kind = ProfileKind::toy;
    p.encoder = {{2, 8, 1, true}, {2, 16, 1, true}, {3, 32, 1, true}, {3, 32, 2, false}};
    p.decoder = {{16, 3, 2}, {8, 3, 2}, {1, 1, 1}};
    p.taps = {{1, 1}, {1, 2}, {2, 2}, {3, 3}, {4, 3}};
    return p;
}

NetworkProfile NetworkProfile::by_kind(ProfileKind k) {
    switch (k) {
        case ProfileKind::csrnet_like: return csrnet_like();
        case ProfileKind::bl_like: return bl_like();
        case ProfileKind::toy: return toy();
    }
    throw std::invalid_argument("unknown profile kind");
}

void NetworkProfile::validate() const {
    if (encoder.empty()) throw std::invalid_argument("profile: encoder has no stages");
    for (const auto& s : encoder) {
        if (s.convs < 1 || s.channels < 1 || s.dilation < 1) {
            throw std::invalid_argument("profile: malformed encoder stage");
        }
    }
    if (decoder.empty() || decoder.back().channels != 1) {
        throw std::invalid_argument("profile: decoder must end in a 1-channel head");
    }
    for (const auto& c : decoder) {
        if (c.channels < 1 || c.kernel < 1 || c.dilation < 1 || c.kernel % 2 == 0) {
            throw std::invalid_argument("profile: malformed decoder conv");
        }
    }
    if (taps.empty()) throw std::invalid_argument("profile: no taps");
    for (const auto& t : taps) {
        if (t.stage < 1 || t.stage > static_cast<int>(encoder.size()) || t.conv < 1 ||
            t.conv > encoder[static_cast<std::size_t>(t.stage - 1)].convs) {
            throw std::invalid_argument("profile: tap references a nonexistent conv");
        }
    }
}

int NetworkProfile::total_stride() const {
    int s = 1;
    for (const auto& st : encoder) {
        if (st.pool_after) s *= 2;
    }
    return s;
}

std::vector<int> NetworkProfile::tap_channels() const {
    std::vector<int> out;
    for (const auto& t : taps) out.push_back(encoder[static_cast<std::size_t>(t.stage - 1)].channels);
    return out;
}

std::vector<int> NetworkProfile::tap_strides() const {
    std::vector<int> stage_stride(encoder.size());
    int s = 1;
    for (std::size_t i = 0; i < encoder.size(); ++i) {
        stage_stride[i] = s;
        if (encoder[i].pool_after) s *= 2;
    }
    std::vector<int> out;
    for (const auto& t : taps) out.push_back(stage_stride[static_cast<std::size_t>(t.stage - 1)]);
    return out;
}

int StudentSpec::scaled(int base_channels) const {
    const double w = static_cast<double>(base_channels) / cpr_denom;
    return std::max(1, static_cast<int>(std::floor(w + 0.5)));
}

std::vector<int> StudentSpec::tap_channels() const {
    std::vector<int> out;
    for (const auto& s : stages) out.push_back(scaled(s.base_channels));
    return out;
}

int StudentSpec::total_stride() const {
    int s = 1;
    for (const auto& st : stages) s *= st.stride;
    return s;
}

void StudentSpec::validate() const {
    if (cpr_denom < 1 || cpr_denom > 5) {
        throw std::invalid_argument("student spec: channel preserving rate must be 1/1..1/5");
    }
    if (stages.size() < 2) throw std::invalid_argument("student spec: needs a stem and at least one stage");
    for (const auto& s : stages) {
        if (s.expansion < 1 || s.blocks < 1 || s.stride < 1 || s.base_channels < 1) {
            throw std::invalid_argument("student spec: malformed stage");
        }
    }
    if (decoder_base.empty()) throw std::invalid_argument("student spec: empty decoder");
}

StudentSpec StudentSpec::for_teacher(const NetworkProfile& teacher, int cpr_denom) {
    teacher.validate();
    const std::size_t n = teacher.taps.size();
    if (n < 5 || n > 6) {
        throw std::invalid_argument("student spec: teacher must expose 5 or 6 taps, got " + std::to_string(n));
    }
    // (expansion, blocks, stride) rows; widths come from the teacher taps.
    static const StudentSpec::Stage kRows[6] = {
        {1, 1, 1, 0}, {1, 1, 1, 0}, {6, 2, 2, 0}, {6, 3, 2, 0}, {6, 4, 2, 0}, {6, 4, 2, 0},
    };
    StudentSpec spec;
    spec.cpr_denom = cpr_denom;
    spec.teacher_kind = teacher.kind;
    const std::vector<int> t_channels = teacher.tap_channels();
    const std::vector<int> t_strides = teacher.tap_strides();
    int cum = 1;
    for (std::size_t k = 0; k < n; ++k) {
        StudentSpec::Stage st = kRows[k];
        st.base_channels = t_channels[k];
        cum *= st.stride;
        if (cum != t_strides[k]) {
            throw std::invalid_argument("student spec: tap " + std::to_string(k) +
                                        " resolution is incompatible with the teacher");
        }
        spec.stages.push_back(st);
    }
    if (cum != teacher.total_stride()) {
        throw std::invalid_argument("student spec: total stride does not match the teacher");
    }
    const int tail = spec.stages.back().base_channels;
    spec.decoder_base = {tail, tail, tail, std::max(1, tail / 2), std::max(1, tail / 4), std::max(1, tail / 8)};
    spec.validate();
    return spec;
}

std::int64_t count_parameters(const Network& net, ParamScope scope) {
    std::int64_t n = net.params().total_size();
    if (scope == ParamScope::training) {
        if (auto* aux = const_cast<Network&>(net).aux_params()) n += aux->total_size();
    }
    return n;
}

namespace {

void check_input_image(const Tensor& image, int stride) {
    if (image.rank() != 3 || image.dim(0) != 3) {
        throw std::invalid_argument("network input must be {3,H,W}, got " + image.shape_str());
    }
    if (image.dim(1) % stride != 0 || image.dim(2) % stride != 0) {
        throw std::invalid_argument("network input sides must be divisible by the total stride " +
                                    std::to_string(stride));
    }
}

}  // namespace

TeacherNet::TeacherNet(NetworkProfile profile, std::uint64_t seed) : profile_(std::move(profile)) {
    profile_.validate();
    Rng rng(seed);
    int in_c = 3;
    for (std::size_t si = 0; si < profile_.encoder.size(); ++si) {
        const auto& st = profile_.encoder[si];
        std::vector<Conv2dLayer> convs;
        for (int ci = 0; ci < st.convs; ++ci) {
            std::ostringstream name;
            name << "enc.s" << (si + 1) << ".c" << (ci + 1);
            ConvOpts o;
            o.dilation = st.dilation;
            o.pad = st.dilation;  // 3x3 same-size
            convs.push_back(make_conv(params_, name.str(), in_c, st.channels, 3, o, rng));
            in_c = st.channels;
        }
        stages_.push_back(std::move(convs));
    }
    for (std::size_t di = 0; di < profile_.decoder.size(); ++di) {
        const auto& dc = profile_.decoder[di];
        std::ostringstream name;
        name << "dec.c" << (di + 1);
        ConvOpts o;
        o.dilation = dc.dilation;
        o.pad = dc.dilation * (dc.kernel - 1) / 2;
        decoder_.push_back(make_conv(params_, name.str(), in_c, dc.channels, dc.kernel, o, rng));
        in_c = dc.channels;
    }
}

Network::Encoded TeacherNet::encode(const Var& image) {
    check_input_image(image.value(), total_stride());
    std::map<std::pair<int, int>, std::size_t> where;
    for (std::size_t k = 0; k < profile_.taps.size(); ++k) {
        where[{profile_.taps[k].stage, profile_.taps[k].conv}] = k;
    }
    Encoded out;
    out.taps.resize(profile_.taps.size());
    Var x = image;
    for (std::size_t si = 0; si < stages_.size(); ++si) {
        for (std::size_t ci = 0; ci < stages_[si].size(); ++ci) {
            x = relu(stages_[si][ci](x));
            auto it = where.find({static_cast<int>(si + 1), static_cast<int>(ci + 1)});
            if (it != where.end()) out.taps[it->second] = x;
        }
        if (profile_.encoder[si].pool_after) x = maxpool2x2(x);
    }
    out.tail = x;
    return out;
}

Var TeacherNet::decode(const Var& feature) {
    Var x = feature;
    for (std::size_t i = 0; i < decoder_.size(); ++i) {
        x = decoder_[i](x);
        if (i + 1 < decoder_.size()) x = relu(x);
    }
    return x;
}

StudentNet::StudentNet(StudentSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
    spec_.validate();
    Rng rng(seed);

    const int stem_out = spec_.scaled(spec_.stages[0].base_channels);
    {
        ConvOpts o;
        o.pad = 1;
        o.stride = spec_.stages[0].stride;
        stem_ = make_conv(params_, "stem", 3, stem_out, 3, o, rng);
    }
    int in_c = stem_out;
    for (std::size_t si = 1; si < spec_.stages.size(); ++si) {
        const auto& st = spec_.stages[si];
        const int out_c = spec_.scaled(st.base_channels);
        std::vector<Block> blocks;
        for (int bi = 0; bi < st.blocks; ++bi) {
            const int stride = bi == 0 ? st.stride : 1;
            const int hidden = st.expansion * in_c;
            std::ostringstream prefix;
            prefix << "l" << si << ".b" << (bi + 1);
            Block b;
            if (st.expansion != 1) {
                b.expand = make_conv(params_, prefix.str() + ".expand", in_c, hidden, 1, ConvOpts{}, rng);
            }
            ConvOpts dw;
            dw.stride = stride;
            dw.pad = 1;
            dw.groups = hidden;
            b.depthwise = make_conv(params_, prefix.str() + ".dw", hidden, hidden, 3, dw, rng);
            b.project = make_conv(params_, prefix.str() + ".project", hidden, out_c, 1, ConvOpts{}, rng);
            b.residual = stride == 1 && in_c == out_c;
            blocks.push_back(std::move(b));
            in_c = out_c;
        }
        stages_.push_back(std::move(blocks));
    }
    for (std::size_t di = 0; di < spec_.decoder_base.size(); ++di) {
        const int out_c = spec_.scaled(spec_.decoder_base[di]);
        std::ostringstream name;
        name << "dec.c" << (di + 1);
        ConvOpts o;
        o.dilation = 2;
        o.pad = 2;
        decoder_.push_back(make_conv(params_, name.str(), in_c, out_c, 3, o, rng));
        in_c = out_c;
    }
    decoder_.push_back(make_conv(params_, "dec.head", in_c, 1, 1, ConvOpts{}, rng));
}

Network::Encoded StudentNet::encode(const Var& image) {
    check_input_image(image.value(), total_stride());
    Encoded out;
    Var x = relu6(stem_(image));
    out.taps.push_back(x);
    for (const auto& stage : stages_) {
        for (const auto& b : stage) {
            Var y = x;
            if (b.expand.defined()) y = relu6(b.expand(y));
            y = relu6(b.depthwise(y));
            y = b.project(y);
            if (b.residual) y = add(y, x);
            x = y;
        }
        out.taps.push_back(x);
    }
    out.tail = x;
    return out;
}

Var StudentNet::decode(const Var& feature) {
    Var x = feature;
    for (std::size_t i = 0; i < decoder_.size(); ++i) {
        x = decoder_[i](x);
        if (i + 1 < decoder_.size()) x = relu(x);
    }
    return x;
}

void StudentNet::attach_aligners(const std::vector<int>& teacher_channels, std::uint64_t seed) {
    if (teacher_channels.size() != spec_.stages.size()) {
        throw std::invalid_argument("attach_aligners: need one target width per tap");
    }
    if (!aligners_.empty()) throw std::logic_error("aligners already attached");
    Rng rng(seed);
    const std::vector<int> own = spec_.tap_channels();
    for (std::size_t k = 0; k < teacher_channels.size(); ++k) {
        aligners_.push_back(make_aligner(aux_, "align." + std::to_string(k), own[k], teacher_channels[k], rng));
    }
}

std::vector<Var> StudentNet::align(const std::vector<Var>& taps) const {
    if (aligners_.empty()) throw std::logic_error("student has no aligners attached");
    if (taps.size() != aligners_.size()) throw std::invalid_argument("align: tap count mismatch");
    std::vector<Var> out;
    out.reserve(taps.size());
    for (std::size_t k = 0; k < taps.size(); ++k) out.push_back(aligners_[k](taps[k]));
    return out;
}

std::unique_ptr<TeacherNet> build_teacher(const NetworkProfile& profile, std::uint64_t seed) {
    return std::make_unique<TeacherNet>(profile, seed);
}

std::unique_ptr<StudentNet> build_student(const StudentSpec& spec, const NetworkProfile& teacher,
                                          std::uint64_t seed) {
    teacher.validate();
    spec.validate();
    // Tap compatibility: same count, same resolutions.
    const std::vector<int> ts = teacher.tap_strides();
    if (ts.size() != spec.stages.size()) {
        throw std::invalid_argument("build_student: tap count differs from the teacher");
    }
    int cum = 1;
    for (std::size_t k = 0; k < spec.stages.size(); ++k) {
        cum *= spec.stages[k].stride;
        if (cum != ts[k]) throw std::invalid_argument("build_student: tap resolutions differ from the teacher");
    }
    return std::make_unique<StudentNet>(spec, seed);
}

Aligner make_aligner(ParamStore& store, const std::string& name, int in_channels, int target_channels, Rng& rng) {
    if (target_channels < 1) throw std::invalid_argument("aligner: target channel count must be >= 1");
    Aligner a;
    a.conv = make_conv(store, name, in_channels, target_channels, 1, ConvOpts{}, rng);
    return a;
}

std::vector<Tensor> tap_features(Network& net, const Tensor& image) {
    auto enc = net.encode(constant(image));
    std::vector<Tensor> out;
    out.reserve(enc.taps.size());
    for (const auto& t : enc.taps) {
        if (!t.defined()) throw std::runtime_error("tap_features: a registered tap was not produced");
        out.push_back(t.value());
    }
    return out;
}

void TapSet::validate() const {
    if (teacher.size() != student.size() || teacher.size() != aligned.size()) {
        throw std::invalid_argument("tap set: mismatched list lengths");
    }
    for (std::size_t k = 0; k < teacher.size(); ++k) {
        const Tensor& t = teacher[k].value();
        const Tensor& s = student[k].value();
        const Tensor& a = aligned[k].value();
        if (t.dim(1) != s.dim(1) || t.dim(2) != s.dim(2)) {
            throw std::invalid_argument("tap set: teacher/student spatial mismatch at tap " + std::to_string(k));
        }
        if (!a.same_shape(t)) {
            throw std::invalid_argument("tap set: aligned feature shape mismatch at tap " + std::to_string(k));
        }
    }
}

TapSet make_tap_set(Network& teacher, StudentNet& student, const Var& image) {
    TapSet ts;
    ts.teacher = teacher.encode(image).taps;
    ts.student = student.encode(image).taps;
    ts.aligned = student.align(ts.student);
    ts.validate();
    for (std::size_t k = 0; k < ts.teacher.size(); ++k) {
        const int want = student.spec().scaled(ts.teacher[k].value().dim(0));
        if (ts.student[k].value().dim(0) != want) {
            throw std::invalid_argument("tap set: student channels at tap " + std::to_string(k) +
                                        " do not follow the channel preserving rate");
        }
    }
    return ts;
}

}  // namespace crowdkd
