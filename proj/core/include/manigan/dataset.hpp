#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "manigan/tensor.hpp"

namespace manigan {

inline constexpr int kImageResolution = 64;

// ---- caption grammar ----

const std::vector<std::string>& shape_names();       // 4 shape classes
const std::vector<std::string>& color_names();       // 6 object colors
const std::vector<std::string>& background_names();  // 4 backgrounds
/// RGB anchor of any grammar color word (object or background).
std::array<float, 3> color_rgb(const std::string& name);

struct Attributes {
  std::string shape;
  std::string color;
  std::string background;
  std::string color2;  // stripe color; empty when absent

  bool operator==(const Attributes&) const = default;
};

/// "a <color> <shape> [with a <color2> stripe] on a <bg> background"
std::vector<std::string> build_caption(const Attributes& attrs);
/// Inverse of build_caption; throws EncodingError on malformed captions.
Attributes parse_caption(const std::vector<std::string>& tokens);

// ---- samples ----

struct CaptionedSample {
  std::string id;
  Tensor image;  // [3,64,64] in [0,1], quantized to the u8 grid
  Tensor mask;   // [1,64,64], 1 inside the object
  std::vector<std::string> tokens;
  Attributes attributes;
};

struct MismatchedPair {
  int sample_index = -1;
  std::vector<std::string> new_tokens;
  Attributes new_attributes;
  std::vector<std::string> changed_attributes;  // subset of color/background/color2
};

/// Deterministic render of one sample. Geometry depends only on the seed,
/// so re-rendering with different colors moves no pixels.
CaptionedSample render_sample(const Attributes& attrs, uint64_t seed);

/// Uniform attribute draw from the grammar (stripe present half the time).
Attributes sample_attributes(Rng& rng);

/// Replace at least one of {color, background, color2} and rebuild the
/// caption. The shape class never changes.
MismatchedPair sample_mismatch(const CaptionedSample& sample, Rng& rng);

// ---- on-disk corpus ----

struct DatasetPaths {
  std::string root;
  std::string manifest() const { return root + "/manifest.txt"; }
};

/// Writes images/, masks/ and manifest.txt under root. Returns sample count.
int make_dataset(const std::string& root, int n_train, int n_val, int n_test,
                 uint64_t seed);

class Dataset {
 public:
  static Dataset load(const std::string& root);

  int size() const { return static_cast<int>(records_.size()); }
  /// Lazily loads and validates the sample; cached afterwards.
  const CaptionedSample& get(int index) const;
  /// Indices of one split: "train", "val" or "test".
  std::vector<int> split(const std::string& name) const;
  const std::string& root() const { return root_; }

  /// All captions, tokenized (no image loading).
  std::vector<std::vector<std::string>> captions() const;

 private:
  struct Record {
    std::string id, image_path, mask_path;
    std::vector<std::string> tokens;
    Attributes attributes;
    int line = 0;
  };

  std::string root_;
  std::vector<Record> records_;
  mutable std::vector<std::optional<CaptionedSample>> cache_;
};

}  // namespace manigan
