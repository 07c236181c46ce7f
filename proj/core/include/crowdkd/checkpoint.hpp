#pragma once

#include <memory>
#include <string>

#include "crowdkd/arch.hpp"
#include "crowdkd/review.hpp"

namespace crowdkd {

/// Checkpoint archive: "CKDC" magic, format version, a JSON header with the
/// network descriptor + named tensor index + review metadata, then the raw
/// little-endian double data in header order. Inference parameters only;
/// distillation aligners are never exported.
void save_checkpoint(const std::string& path, const TeacherNet& net, int review_rounds = 0);
void save_checkpoint(const std::string& path, const StudentNet& net, int review_rounds = 0);

struct LoadedModel {
    std::shared_ptr<Network> network;  // the bare teacher or student
    std::string kind;                  // "teacher" | "student"
    int review_rounds = 0;

    /// network wrapped for inference: a ReviewWrapper when rounds > 0,
    /// otherwise the bare network. Valid while this struct lives.
    std::shared_ptr<Network> runner;
};

LoadedModel load_checkpoint(const std::string& path);

/// Re-exports a checkpoint with different review-round metadata; weights
/// and descriptors are carried over untouched.
void set_review_rounds(const std::string& in_path, const std::string& out_path, int rounds);

}  // namespace crowdkd
