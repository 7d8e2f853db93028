#include "dualmem/types.hpp"

#include <cmath>

namespace dualmem {

bool BBox::valid() const {
  return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) &&
         std::isfinite(y2) && x2 > x1 && y2 > y1;
}

std::string_view to_string(Stream s) {
  return s == Stream::unknown ? "unknown" : "known";
}

std::string_view to_string(Category c) {
  return c == Category::known ? "known" : "future";
}

std::string_view to_string(Label l) {
  switch (l) {
    case Label::pos: return "pos";
    case Label::known_as_unknown: return "known_as_unknown";
    case Label::neg: return "neg";
    case Label::amb: return "amb";
  }
  return "?";
}

Stream stream_from_string(std::string_view s) {
  if (s == "unknown") return Stream::unknown;
  if (s == "known") return Stream::known;
  throw Error("invalid stream '" + std::string(s) + "'");
}

Category category_from_string(std::string_view s) {
  if (s == "known") return Category::known;
  if (s == "future") return Category::future;
  throw Error("invalid category '" + std::string(s) + "'");
}

Label label_from_string(std::string_view s) {
  if (s == "pos") return Label::pos;
  if (s == "known_as_unknown") return Label::known_as_unknown;
  if (s == "neg") return Label::neg;
  if (s == "amb") return Label::amb;
  throw Error("invalid label '" + std::string(s) + "'");
}

EmbeddingMatrix::EmbeddingMatrix(std::size_t dim, std::size_t count)
    : dim_(dim), count_(count), data_(dim * count, 0.0f) {
  if (dim == 0) throw Error("embedding dim must be positive");
}

EmbeddingMatrix::EmbeddingMatrix(std::size_t dim, std::vector<float> data)
    : dim_(dim), data_(std::move(data)) {
  if (dim == 0) throw Error("embedding dim must be positive");
  if (data_.size() % dim != 0) throw Error("embedding data is not a whole number of rows");
  count_ = data_.size() / dim;
}

void EmbeddingMatrix::append(std::span<const float> r) {
  if (dim_ == 0) dim_ = r.size();
  if (r.size() != dim_ || dim_ == 0) throw Error("embedding row has wrong dimension");
  data_.insert(data_.end(), r.begin(), r.end());
  ++count_;
}

void EmbeddingMatrix::normalize_rows() {
  for (std::size_t i = 0; i < count_; ++i) {
    auto r = row(i);
    const double n = l2_norm(r);
    if (!(n > 0.0) || !std::isfinite(n)) throw Error("cannot normalize zero or non-finite row " + std::to_string(i));
    for (float& v : r) v = static_cast<float>(v / n);
  }
}

EmbeddingMatrix EmbeddingMatrix::select(std::span<const std::size_t> rows) const {
  EmbeddingMatrix out;
  out.dim_ = dim_;
  out.data_.reserve(rows.size() * dim_);
  for (std::size_t r : rows) {
    if (r >= count_) throw Error("row index out of range");
    auto src = row(r);
    out.data_.insert(out.data_.end(), src.begin(), src.end());
  }
  out.count_ = rows.size();
  return out;
}

double dot(std::span<const float> a, std::span<const float> b) {
  // Four independent accumulators; order is fixed so results are reproducible.
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  const std::size_t n = a.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += static_cast<double>(a[i]) * b[i];
    s1 += static_cast<double>(a[i + 1]) * b[i + 1];
    s2 += static_cast<double>(a[i + 2]) * b[i + 2];
    s3 += static_cast<double>(a[i + 3]) * b[i + 3];
  }
  for (; i < n; ++i) s0 += static_cast<double>(a[i]) * b[i];
  return (s0 + s1) + (s2 + s3);
}

double l2_norm(std::span<const float> a) { return std::sqrt(dot(a, a)); }

}  // namespace dualmem
