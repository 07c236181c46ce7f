#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crowdkd/density.hpp"
#include "crowdkd/rng.hpp"

namespace crowdkd {

enum class Split { train, test };

const char* split_name(Split s);
Split split_from_name(const std::string& name);

struct Dataset {
    std::vector<Scene> scenes;
    Split split = Split::train;
    std::string root;

    std::size_t size() const { return scenes.size(); }
    bool empty() const { return scenes.empty(); }
};

/// Reads root/manifest.json and the scene documents it lists for `split`.
/// Image files are checked for existence here and decoded lazily later.
Dataset load_dataset(const std::string& root, Split split);

/// Deterministic desk-scale scene generator: textured backgrounds with
/// blob heads whose centers become the annotation points. Pure function
/// of its arguments.
Dataset synth_scenes(int n, int height, int width, int count_lo, int count_hi, std::uint64_t seed);

/// Random crop to (crop_h, crop_w) with points translated and out-of-crop
/// points dropped, then a horizontal flip with probability flip_prob.
Scene augment(const Scene& scene, int crop_h, int crop_w, double flip_prob, Rng& rng);

/// Writes manifest + scene JSONs + PNG images under root:
///   root/manifest.json, root/scenes/*.json, root/images/*.png
/// Refuses to clobber an existing manifest unless force is set.
void save_dataset(const std::string& root, const Dataset& train, const Dataset& test, bool force = false);

}  // namespace crowdkd
