#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dualmem {

/// Raised for every validation, ingestion and precondition failure.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Axis-aligned box in corner format, pixel coordinates.
struct BBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }

  /// Finite coordinates with x2 > x1 and y2 > y1.
  bool valid() const;

  bool operator==(const BBox&) const = default;
};

enum class Stream { unknown, known };
enum class Category { known, future };
enum class Label { pos, known_as_unknown, neg, amb };

std::string_view to_string(Stream s);
std::string_view to_string(Category c);
std::string_view to_string(Label l);

Stream stream_from_string(std::string_view s);
Category category_from_string(std::string_view s);
Label label_from_string(std::string_view s);

struct ProposalRecord {
  std::string id;
  std::string image_id;
  BBox bbox;
  double objectness = 0.0;
  Stream stream = Stream::unknown;
  std::optional<std::uint64_t> embedding_index;

  bool operator==(const ProposalRecord&) const = default;
};

struct GroundTruthBox {
  std::string image_id;
  BBox bbox;
  Category category = Category::known;

  bool operator==(const GroundTruthBox&) const = default;
};

struct LabeledProposal {
  ProposalRecord proposal;
  Label label = Label::neg;
  double max_iou_future = 0.0;
  double max_iou_known = 0.0;
};

/// Per-proposal outcome of a filter. `lambda` is unset for known-stream
/// records, which always pass through.
struct FilterDecision {
  std::string id;
  std::optional<double> lambda;
  double tau = 0.0;
  bool suppressed = false;
  std::optional<Label> label;
  // Sub-conditions of the prototype rule; only the k-means baseline sets them.
  std::optional<double> max_cos_neg;
  std::optional<double> max_cos_pos;

  bool operator==(const FilterDecision&) const = default;
};

/// Dense row-major matrix of unit-norm float embeddings.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::size_t dim, std::size_t count);
  EmbeddingMatrix(std::size_t dim, std::vector<float> data);

  std::size_t dim() const { return dim_; }
  std::size_t count() const { return count_; }
  bool empty() const { return count_ == 0; }

  std::span<const float> row(std::size_t i) const {
    return {data_.data() + i * dim_, dim_};
  }
  std::span<float> row(std::size_t i) { return {data_.data() + i * dim_, dim_}; }

  const std::vector<float>& data() const { return data_; }

  void append(std::span<const float> r);

  /// Rescales every row to unit L2 norm. Zero rows raise.
  void normalize_rows();

  /// Matrix made of the given rows, in order.
  EmbeddingMatrix select(std::span<const std::size_t> rows) const;

  bool operator==(const EmbeddingMatrix&) const = default;

 private:
  std::size_t dim_ = 0;
  std::size_t count_ = 0;
  std::vector<float> data_;
};

double dot(std::span<const float> a, std::span<const float> b);
double l2_norm(std::span<const float> a);

}  // namespace dualmem
