#include "manigan/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "manigan/image_io.hpp"
#include "manigan/text_encoder.hpp"

namespace fs = std::filesystem;

namespace manigan {

const std::vector<std::string>& shape_names() {
  static const std::vector<std::string> names = {"circle", "cross", "square",
                                                 "triangle"};
  return names;
}

const std::vector<std::string>& color_names() {
  static const std::vector<std::string> names = {"blue",   "green",  "orange",
                                                 "purple", "red",    "yellow"};
  return names;
}

const std::vector<std::string>& background_names() {
  static const std::vector<std::string> names = {"black", "gray", "navy",
                                                 "white"};
  return names;
}

std::array<float, 3> color_rgb(const std::string& name) {
  if (name == "blue") return {0.20f, 0.25f, 0.75f};
  if (name == "green") return {0.20f, 0.70f, 0.25f};
  if (name == "orange") return {0.80f, 0.50f, 0.15f};
  if (name == "purple") return {0.55f, 0.20f, 0.65f};
  if (name == "red") return {0.75f, 0.20f, 0.20f};
  if (name == "yellow") return {0.75f, 0.70f, 0.20f};
  if (name == "black") return {0.12f, 0.12f, 0.12f};
  if (name == "gray") return {0.50f, 0.50f, 0.50f};
  if (name == "navy") return {0.15f, 0.18f, 0.40f};
  if (name == "white") return {0.90f, 0.90f, 0.90f};
  throw ConfigError("unknown color word: " + name);
}

static bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

static void validate_attributes(const Attributes& a) {
  if (!contains(shape_names(), a.shape))
    throw ConfigError("unknown shape: " + a.shape);
  if (!contains(color_names(), a.color))
    throw ConfigError("unknown object color: " + a.color);
  if (!contains(background_names(), a.background))
    throw ConfigError("unknown background: " + a.background);
  if (!a.color2.empty()) {
    if (!contains(color_names(), a.color2))
      throw ConfigError("unknown stripe color: " + a.color2);
    if (a.color2 == a.color)
      throw ConfigError("stripe color must differ from the object color");
  }
}

std::vector<std::string> build_caption(const Attributes& attrs) {
  validate_attributes(attrs);
  std::vector<std::string> t = {"a", attrs.color, attrs.shape};
  if (!attrs.color2.empty()) {
    t.insert(t.end(), {"with", "a", attrs.color2, "stripe"});
  }
  t.insert(t.end(), {"on", "a", attrs.background, "background"});
  return t;
}

Attributes parse_caption(const std::vector<std::string>& tokens) {
  auto fail = [&] {
    std::string joined;
    for (const auto& t : tokens) joined += t + " ";
    throw EncodingError("caption does not match the grammar: " + joined);
  };
  Attributes a;
  size_t i = 0;
  auto expect = [&](const std::string& word) {
    if (i >= tokens.size() || tokens[i] != word) fail();
    ++i;
  };
  auto take = [&]() -> std::string {
    if (i >= tokens.size()) fail();
    return tokens[i++];
  };
  expect("a");
  a.color = take();
  a.shape = take();
  if (i < tokens.size() && tokens[i] == "with") {
    expect("with");
    expect("a");
    a.color2 = take();
    expect("stripe");
  }
  expect("on");
  expect("a");
  a.background = take();
  expect("background");
  if (i != tokens.size()) fail();
  validate_attributes(a);
  return a;
}

namespace {

struct Geometry {
  float cx, cy;    // center, pixel coordinates
  float size;      // radius-like extent, per-shape semantics
  float stripe_h;  // stripe half-height
};

Geometry draw_geometry(const Attributes& attrs, Rng& rng) {
  Geometry g;
  g.cx = static_cast<float>(rng.uniform(24.0, 40.0));
  g.cy = static_cast<float>(rng.uniform(24.0, 40.0));
  double lo = 13, hi = 19;  // circle default
  if (attrs.shape == "square") lo = 11, hi = 17;
  if (attrs.shape == "triangle") lo = 15, hi = 20;
  if (attrs.shape == "cross") lo = 14, hi = 20;
  g.size = static_cast<float>(rng.uniform(lo, hi));
  g.stripe_h = 0.08f * g.size;
  return g;
}

bool inside_shape(const std::string& shape, const Geometry& g, float px,
                  float py) {
  float dx = px - g.cx;
  float dy = py - g.cy;
  float s = g.size;
  if (shape == "circle") return dx * dx + dy * dy <= s * s;
  if (shape == "square")
    return std::fabs(dx) <= s && std::fabs(dy) <= s;
  if (shape == "triangle") {
    if (dy < -0.9f * s || dy > 0.9f * s) return false;
    return std::fabs(dx) <= (dy + 0.9f * s) / 1.8f;
  }
  // cross: union of a horizontal and a vertical bar
  float t = 0.28f * s;
  bool horizontal = std::fabs(dy) <= t && std::fabs(dx) <= s;
  bool vertical = std::fabs(dx) <= t && std::fabs(dy) <= s;
  return horizontal || vertical;
}

}  // namespace

Attributes sample_attributes(Rng& rng) {
  Attributes a;
  a.shape = shape_names()[rng.uniform_index(shape_names().size())];
  a.color = color_names()[rng.uniform_index(color_names().size())];
  a.background =
      background_names()[rng.uniform_index(background_names().size())];
  if (rng.uniform() < 0.5) {
    size_t k = rng.uniform_index(color_names().size() - 1);
    for (size_t c = 0; c <= k; ++c)
      if (color_names()[c] == a.color) ++k;
    a.color2 = color_names()[k];
  }
  return a;
}

CaptionedSample render_sample(const Attributes& attrs, uint64_t seed) {
  validate_attributes(attrs);
  Rng seed_rng(seed);
  Rng geometry_rng = seed_rng.fork(0);
  Rng jitter_rng = seed_rng.fork(1);
  Geometry g = draw_geometry(attrs, geometry_rng);

  auto jitter = [&jitter_rng](std::array<float, 3> c) {
    for (auto& v : c)
      v = std::clamp(
          v + static_cast<float>(jitter_rng.uniform(-0.02, 0.02)), 0.0f, 1.0f);
    return c;
  };
  std::array<float, 3> object_rgb = jitter(color_rgb(attrs.color));
  std::array<float, 3> stripe_rgb =
      attrs.color2.empty() ? object_rgb : jitter(color_rgb(attrs.color2));
  std::array<float, 3> bg_rgb = color_rgb(attrs.background);
  for (auto& v : bg_rgb) v = quantize_unit(v);

  const int res = kImageResolution;
  const int ss = 4;  // supersampling grid per axis
  std::vector<float> image(3 * static_cast<size_t>(res) * res);
  std::vector<float> mask(static_cast<size_t>(res) * res, 0.0f);

  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x) {
      int body = 0, stripe = 0;
      for (int sy = 0; sy < ss; ++sy)
        for (int sx = 0; sx < ss; ++sx) {
          float px = x + (sx + 0.5f) / ss;
          float py = y + (sy + 0.5f) / ss;
          if (!inside_shape(attrs.shape, g, px, py)) continue;
          bool in_stripe =
              !attrs.color2.empty() && std::fabs(py - g.cy) <= g.stripe_h;
          (in_stripe ? stripe : body)++;
        }
      float cov_body = body / static_cast<float>(ss * ss);
      float cov_stripe = stripe / static_cast<float>(ss * ss);
      float cov = cov_body + cov_stripe;
      size_t idx = static_cast<size_t>(y) * res + x;
      for (int c = 0; c < 3; ++c) {
        float v = bg_rgb[c] * (1.0f - cov) + object_rgb[c] * cov_body +
                  stripe_rgb[c] * cov_stripe;
        image[static_cast<size_t>(c) * res * res + idx] = quantize_unit(v);
      }
      if (cov > 0.0f) mask[idx] = 1.0f;
    }

  double mask_fraction =
      std::count(mask.begin(), mask.end(), 1.0f) / double(res * res);
  if (mask_fraction < 0.05 || mask_fraction > 0.6)
    throw NumericError("rendered mask fraction out of range: " +
                       std::to_string(mask_fraction));

  CaptionedSample s;
  s.image = Tensor::from_data({3, res, res}, std::move(image));
  s.mask = Tensor::from_data({1, res, res}, std::move(mask));
  s.tokens = build_caption(attrs);
  s.attributes = attrs;
  return s;
}

MismatchedPair sample_mismatch(const CaptionedSample& sample, Rng& rng) {
  const Attributes& old = sample.attributes;
  Attributes next = old;
  std::vector<std::string> changed;

  auto other_color = [&rng](const std::vector<std::string>& pool,
                            const std::string& current,
                            const std::string& avoid) {
    std::vector<std::string> options;
    for (const auto& c : pool)
      if (c != current && c != avoid) options.push_back(c);
    return options[rng.uniform_index(options.size())];
  };

  std::vector<std::string> mutable_attrs = {"color", "background"};
  if (!old.color2.empty()) mutable_attrs.push_back("color2");

  for (const auto& name : mutable_attrs) {
    if (rng.uniform() >= 0.5) continue;
    if (name == "color")
      next.color = other_color(color_names(), old.color, next.color2);
    else if (name == "background")
      next.background =
          other_color(background_names(), old.background, "");
    else
      next.color2 = other_color(color_names(), old.color2, next.color);
    changed.push_back(name);
  }
  if (changed.empty()) {
    const auto& name = mutable_attrs[rng.uniform_index(mutable_attrs.size())];
    if (name == "color")
      next.color = other_color(color_names(), old.color, next.color2);
    else if (name == "background")
      next.background =
          other_color(background_names(), old.background, "");
    else
      next.color2 = other_color(color_names(), old.color2, next.color);
    changed.push_back(name);
  }

  MismatchedPair pair;
  pair.new_attributes = next;
  pair.new_tokens = build_caption(next);
  pair.changed_attributes = std::move(changed);
  return pair;
}

// ---- on-disk corpus ----

static std::string attr_field(const Attributes& a) {
  return a.color2.empty() ? a.background : a.background + "," + a.color2;
}

int make_dataset(const std::string& root, int n_train, int n_val, int n_test,
                 uint64_t seed) {
  if (n_train < 1 || n_val < 1 || n_test < 1)
    throw ConfigError("every split needs at least one sample");
  fs::create_directories(fs::path(root) / "images");
  fs::create_directories(fs::path(root) / "masks");

  std::ofstream manifest(fs::path(root) / "manifest.txt");
  if (!manifest) throw IoError("cannot write manifest under " + root);

  Rng rng(seed);
  int written = 0;
  auto emit_split = [&](const std::string& split, int count) {
    for (int i = 0; i < count; ++i) {
      Attributes attrs = sample_attributes(rng);
      uint64_t sample_seed = rng.next_u64();
      CaptionedSample s = render_sample(attrs, sample_seed);
      char id[32];
      std::snprintf(id, sizeof id, "%s_%05d", split.c_str(), i);
      std::string image_path = "images/" + std::string(id) + ".png";
      std::string mask_path = "masks/" + std::string(id) + ".png";
      write_png_rgb((fs::path(root) / image_path).string(), s.image);
      write_png_gray((fs::path(root) / mask_path).string(), s.mask);
      std::string caption;
      for (size_t t = 0; t < s.tokens.size(); ++t)
        caption += (t ? " " : "") + s.tokens[t];
      manifest << id << "|" << image_path << "|" << mask_path << "|" << caption
               << "|" << attrs.shape << "|" << attrs.color << "|"
               << attr_field(attrs) << "\n";
      ++written;
    }
  };
  emit_split("train", n_train);
  emit_split("val", n_val);
  emit_split("test", n_test);
  return written;
}

Dataset Dataset::load(const std::string& root) {
  std::ifstream manifest(fs::path(root) / "manifest.txt");
  if (!manifest) throw IoError("no manifest under " + root);

  Dataset d;
  d.root_ = root;
  std::string line;
  int line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '|')) fields.push_back(field);
    if (fields.size() != 7)
      throw IoError("manifest line " + std::to_string(line_no) +
                    ": expected 7 fields, got " +
                    std::to_string(fields.size()));
    Record r;
    r.line = line_no;
    r.id = fields[0];
    r.image_path = fields[1];
    r.mask_path = fields[2];
    r.tokens = tokenize(fields[3]);
    r.attributes.shape = fields[4];
    r.attributes.color = fields[5];
    std::string bg_field = fields[6];
    auto comma = bg_field.find(',');
    if (comma == std::string::npos) {
      r.attributes.background = bg_field;
    } else {
      r.attributes.background = bg_field.substr(0, comma);
      r.attributes.color2 = bg_field.substr(comma + 1);
    }
    for (const auto& existing : d.records_)
      if (existing.id == r.id)
        throw IoError("duplicate id in manifest: " + r.id);
    d.records_.push_back(std::move(r));
  }
  if (d.records_.empty()) throw IoError("manifest is empty: " + root);
  d.cache_.resize(d.records_.size());
  return d;
}

const CaptionedSample& Dataset::get(int index) const {
  if (index < 0 || index >= size())
    throw DimensionError("dataset index out of range");
  auto& slot = cache_[index];
  if (!slot) {
    const Record& r = records_[index];
    try {
      validate_attributes(r.attributes);
      if (build_caption(r.attributes) != r.tokens)
        throw EncodingError("caption does not match attributes");
      CaptionedSample s;
      s.id = r.id;
      s.image = read_png_rgb((fs::path(root_) / r.image_path).string());
      s.mask = read_png_gray((fs::path(root_) / r.mask_path).string());
      if (s.image.shape() !=
          Shape{3, kImageResolution, kImageResolution})
        throw DimensionError("unexpected image shape");
      double fraction = 0.0;
      for (float v : s.mask.data()) {
        if (v != 0.0f && v != 1.0f)
          throw NumericError("mask is not binary");
        fraction += v;
      }
      fraction /= s.mask.size();
      if (fraction < 0.05 || fraction > 0.6)
        throw NumericError("mask fraction out of range");
      s.tokens = r.tokens;
      s.attributes = r.attributes;
      slot = std::move(s);
    } catch (const Error& e) {
      throw IoError("record " + r.id + " (line " + std::to_string(r.line) +
                    "): " + e.what());
    }
  }
  return *slot;
}

std::vector<int> Dataset::split(const std::string& name) const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i)
    if (records_[i].id.rfind(name + "_", 0) == 0) out.push_back(i);
  return out;
}

std::vector<std::vector<std::string>> Dataset::captions() const {
  std::vector<std::vector<std::string>> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.tokens);
  return out;
}

}  // namespace manigan
