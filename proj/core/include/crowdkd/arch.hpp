#pragma once

#include <memory>
#include <string>
#include <vector>

#include "crowdkd/nn.hpp"

namespace crowdkd {

enum class ProfileKind { csrnet_like, bl_like, toy };

const char* profile_kind_name(ProfileKind k);
ProfileKind profile_kind_from_name(const std::string& name);

/// (stage, conv) tap address, 1-based, naming the conv whose activated
/// output is exported for distillation.
struct TapId {
    int stage = 1;
    int conv = 1;
};

/// VGG-style teacher description: plain conv stages with optional 2x2 max
/// pooling between them, then a dilated conv decoder ending in 1 channel.
struct NetworkProfile {
    ProfileKind kind = ProfileKind::toy;

    struct EncoderStage {
        int convs = 1;
        int channels = 1;
        int dilation = 1;
        bool pool_after = false;
    };
    struct DecoderConv {
        int channels = 1;
        int kernel = 3;
        int dilation = 1;
    };

    std::vector<EncoderStage> encoder;
    std::vector<DecoderConv> decoder;  // last entry must be the 1-channel head
    std::vector<TapId> taps;

    static NetworkProfile csrnet_like();
    static NetworkProfile bl_like();
    static NetworkProfile toy();
    static NetworkProfile by_kind(ProfileKind k);

    void validate() const;
    int total_stride() const;
    std::vector<int> tap_channels() const;
    std::vector<int> tap_strides() const;
};

/// MobileNetV2-style student: a plain 3x3 stem followed by inverted
/// residual stages, one stage per teacher tap, all widths scaled by the
/// channel preserving rate 1/cpr_denom.
struct StudentSpec {
    int cpr_denom = 4;

    struct Stage {
        int expansion = 6;  // 1 skips the pointwise expansion conv
        int blocks = 1;
        int stride = 1;
        int base_channels = 1;
    };
    std::vector<Stage> stages;       // stages[0] is the stem
    std::vector<int> decoder_base;   // full-width decoder conv channels
    ProfileKind teacher_kind = ProfileKind::toy;

    static StudentSpec for_teacher(const NetworkProfile& teacher, int cpr_denom);

    int scaled(int base_channels) const;  // round-half-up, floor 1
    std::vector<int> tap_channels() const;
    int total_stride() const;
    void validate() const;
};

enum class ParamScope { inference, training };

class Network {
public:
    virtual ~Network() = default;

    struct Encoded {
        Var tail;               // decoder input feature
        std::vector<Var> taps;  // ordered per the profile/spec tap list
    };

    virtual Encoded encode(const Var& image) = 0;
    virtual Var decode(const Var& feature) = 0;
    virtual Var forward(const Var& image) { return decode(encode(image).tail); }

    virtual ParamStore& params() = 0;
    const ParamStore& params() const { return const_cast<Network*>(this)->params(); }
    virtual ParamStore* aux_params() { return nullptr; }

    virtual int total_stride() const = 0;
    virtual bool has_review_seam() const { return true; }
};

/// Parameter count; the training scope adds distillation-only aligners.
std::int64_t count_parameters(const Network& net, ParamScope scope);

class TeacherNet final : public Network {
public:
    TeacherNet(NetworkProfile profile, std::uint64_t seed);

    Encoded encode(const Var& image) override;
    Var decode(const Var& feature) override;
    using Network::params;
    ParamStore& params() override { return params_; }
    int total_stride() const override { return profile_.total_stride(); }
    const NetworkProfile& profile() const { return profile_; }

private:
    NetworkProfile profile_;
    ParamStore params_;
    std::vector<std::vector<Conv2dLayer>> stages_;
    std::vector<Conv2dLayer> decoder_;
};

/// Training-only 1x1 conv lifting a student tap to the teacher width.
struct Aligner {
    Conv2dLayer conv;
    Var operator()(const Var& feature) const { return conv(feature); }
};

class StudentNet final : public Network {
public:
    StudentNet(StudentSpec spec, std::uint64_t seed);

    Encoded encode(const Var& image) override;
    Var decode(const Var& feature) override;
    using Network::params;
    ParamStore& params() override { return params_; }
    ParamStore* aux_params() override { return aligners_.empty() ? nullptr : &aux_; }
    int total_stride() const override { return spec_.total_stride(); }
    const StudentSpec& spec() const { return spec_; }

    /// Creates one aligner per tap mapping to the given teacher widths.
    void attach_aligners(const std::vector<int>& teacher_channels, std::uint64_t seed);
    bool has_aligners() const { return !aligners_.empty(); }
    const std::vector<Aligner>& aligners() const { return aligners_; }
    std::vector<Var> align(const std::vector<Var>& taps) const;

private:
    struct Block {
        Conv2dLayer expand;  // undefined when expansion == 1
        Conv2dLayer depthwise;
        Conv2dLayer project;
        bool residual = false;
    };

    StudentSpec spec_;
    ParamStore params_;
    ParamStore aux_;
    Conv2dLayer stem_;
    std::vector<std::vector<Block>> stages_;
    std::vector<Conv2dLayer> decoder_;
    std::vector<Aligner> aligners_;
};

std::unique_ptr<TeacherNet> build_teacher(const NetworkProfile& profile, std::uint64_t seed = 0);
std::unique_ptr<StudentNet> build_student(const StudentSpec& spec, const NetworkProfile& teacher,
                                          std::uint64_t seed = 0);

/// Standalone aligner (spec op align_channels); registered in `store`.
Aligner make_aligner(ParamStore& store, const std::string& name, int in_channels, int target_channels,
                     Rng& rng);

/// Forward pass returning the tap feature values of one network.
std::vector<Tensor> tap_features(Network& net, const Tensor& image);

/// Matched teacher/student tap features plus the channel-aligned student
/// side, as used by the distillation losses.
struct TapSet {
    std::vector<Var> teacher;
    std::vector<Var> student;
    std::vector<Var> aligned;

    void validate() const;
};

/// Runs teacher (frozen) and student on the same image and aligns the
/// student taps. The student must have aligners attached.
TapSet make_tap_set(Network& teacher, StudentNet& student, const Var& image);

}  // namespace crowdkd
