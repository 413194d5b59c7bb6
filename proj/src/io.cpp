// SPDX-License-Identifier: Apache-2.0

#include "icprobe/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "csv.hpp"
#include "icprobe/error.hpp"
#include "json.hpp"

namespace icprobe {
namespace {

using nlohmann::json;

constexpr char kRepsMagic[4] = {'I', 'C', 'P', 'R'};
constexpr char kCheckpointMagic[4] = {'I', 'C', 'P', 'K'};
constexpr std::size_t kCheckpointHeaderSize = 24;

class ByteWriter {
 public:
  void bytes(const char* data, std::size_t n) { out_.append(data, n); }

  template <typename T>
  void scalar(T value) {
    static_assert(std::is_integral_v<T> || std::is_floating_point_v<T>);
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    U bits;
    std::memcpy(&bits, &value, sizeof bits);
    for (std::size_t i = 0; i < sizeof bits; ++i) out_.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
  }

  void floats(std::span<const float> values) {
    if constexpr (std::endian::native == std::endian::little) {
      bytes(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(float));
    } else {
      for (float v : values) scalar(v);
    }
  }

  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  ByteReader(std::string_view bytes, const char* format) : bytes_(bytes), format_(format) {}

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

  template <typename T>
  T scalar() {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    U bits = 0;
    for (std::size_t i = 0; i < sizeof bits; ++i) {
      bits |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof bits;
    T value;
    std::memcpy(&value, &bits, sizeof value);
    return value;
  }

  std::vector<float> floats(std::size_t n, const std::string& what) {
    std::vector<float> out(n);
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(out.data(), bytes_.data() + pos_, n * sizeof(float));
      pos_ += n * sizeof(float);
    } else {
      for (auto& v : out) v = scalar<float>();
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(out[i])) {
        error("non-finite value in " + what, pos_ - (n - i) * sizeof(float));
      }
    }
    return out;
  }

  bool starts_with(const char (&magic)[4]) const { return bytes_.size() >= 4 && std::memcmp(bytes_.data(), magic, 4) == 0; }

  [[noreturn]] void error(const std::string& message, std::size_t at) const {
    fail(ErrorKind::Parse, std::string(format_) + ": " + message + " at byte " + std::to_string(at));
  }

  void need(std::size_t n, const std::string& what) const {
    if (remaining() < n) {
      error(what + ": need " + std::to_string(n) + " bytes, " + std::to_string(remaining()) + " remain",
            bytes_.size());
    }
  }

 private:
  std::string_view bytes_;
  const char* format_;
  std::size_t pos_ = 0;
};

std::uint32_t checked_u32(std::size_t value, const char* what) {
  require(value <= 0xFFFFFFFFu, ErrorKind::InvalidArgument, std::string(what) + " does not fit in 32 bits");
  return static_cast<std::uint32_t>(value);
}

std::optional<std::size_t> parse_index(std::string_view text) {
  std::size_t value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) return std::nullopt;
  return value;
}

}  // namespace

// ---------------------------------------------------------------------------
// ICPR

std::string encode_reps(std::span<const RepRecord> records) {
  return encode_reps(records, records.empty() ? 0 : checked_u32(records.front().reps.dim(), "dim"));
}

std::string encode_reps(std::span<const RepRecord> records, std::uint32_t dim) {
  if (!records.empty()) dim = checked_u32(records.front().reps.dim(), "dim");
  ByteWriter w;
  w.bytes(kRepsMagic, 4);
  w.scalar<std::uint32_t>(kRepsVersion);
  w.scalar<std::uint32_t>(0);
  w.scalar<std::uint32_t>(dim);
  w.scalar<std::uint64_t>(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    require(r.reps.dim() == dim, ErrorKind::Dimension,
            "record " + std::to_string(i) + " has dim " + std::to_string(r.reps.dim()) + ", container dim is " +
                std::to_string(dim));
    require(r.reps.n_tokens() > 0, ErrorKind::InvalidArgument, "record " + std::to_string(i) + " has no tokens");
    require(!r.label || *r.label != kUnlabeled, ErrorKind::InvalidArgument,
            "record " + std::to_string(i) + " uses the reserved unlabeled sentinel as a label");
    require(all_finite(r.reps.values()), ErrorKind::InvalidArgument,
            "record " + std::to_string(i) + " contains non-finite values");
    w.scalar<std::uint32_t>(checked_u32(r.reps.n_tokens(), "token count"));
    w.scalar<std::uint32_t>(r.label.value_or(kUnlabeled));
    w.floats(r.reps.values());
  }
  return w.take();
}

std::vector<RepRecord> decode_reps(std::string_view bytes, std::uint32_t* dim_out) {
  ByteReader r(bytes, "ICPR");
  r.need(kRepsHeaderSize, "truncated header");
  if (!r.starts_with(kRepsMagic)) r.error("bad magic (expected \"ICPR\")", 0);
  r.scalar<std::uint32_t>();  // magic
  const auto version = r.scalar<std::uint32_t>();
  if (version != kRepsVersion) {
    fail(ErrorKind::Version, "ICPR: unsupported version " + std::to_string(version) + " (expected " +
                                 std::to_string(kRepsVersion) + ") at byte 4");
  }
  const auto flags = r.scalar<std::uint32_t>();
  if (flags != 0) r.error("unsupported flags " + std::to_string(flags), 8);
  const auto dim = r.scalar<std::uint32_t>();
  const auto count = r.scalar<std::uint64_t>();
  if (dim == 0 && count > 0) r.error("dim is 0 but count is " + std::to_string(count), 12);

  std::vector<RepRecord> records;
  records.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, r.remaining() / 8)));
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = "record " + std::to_string(i);
    const std::size_t start = r.offset();
    r.need(8, "truncated " + name + " header");
    const auto n_tokens = r.scalar<std::uint32_t>();
    const auto label = r.scalar<std::uint32_t>();
    if (n_tokens == 0) r.error(name + " has zero tokens", start);
    const std::uint64_t n_values = static_cast<std::uint64_t>(n_tokens) * dim;
    if (n_values > r.remaining() / sizeof(float)) {
      r.need(r.remaining() + 1, "truncated " + name + " (" + std::to_string(n_tokens) + "x" + std::to_string(dim) +
                                    " floats)");
    }
    auto values = r.floats(static_cast<std::size_t>(n_values), name);
    records.push_back({RepSequence(n_tokens, dim, std::move(values)),
                       label == kUnlabeled ? std::nullopt : std::optional<std::uint32_t>(label)});
  }
  if (r.remaining() != 0) r.error(std::to_string(r.remaining()) + " bytes of trailing data", r.offset());
  if (dim_out != nullptr) *dim_out = dim;
  return records;
}

void write_reps(std::span<const RepRecord> records, const std::filesystem::path& path) {
  write_file_atomic(path, encode_reps(records));
}

std::vector<RepRecord> read_reps(const std::filesystem::path& path, std::uint32_t* dim_out) {
  const std::string bytes = read_file(path);
  try {
    return decode_reps(bytes, dim_out);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Metadata

std::vector<ExampleMeta> parse_meta(std::string_view text, std::string_view source) {
  std::vector<ExampleMeta> out;
  std::unordered_map<std::string, std::size_t> first_line;
  std::size_t line_no = 0;
  const std::string where(source);
  for (std::string_view line : csv::lines(text)) {
    ++line_no;
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    const std::string at = where + " line " + std::to_string(line_no);
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      fail(ErrorKind::Parse, at + ": malformed JSON (" + e.what() + ")");
    }
    if (!obj.is_object()) fail(ErrorKind::Parse, at + ": expected a JSON object");

    ExampleMeta meta;
    const auto id = obj.find("example_id");
    if (id == obj.end() || !id->is_string()) fail(ErrorKind::Parse, at + ": missing string field \"example_id\"");
    meta.example_id = id->get<std::string>();

    for (const char* key : {"task", "instruction_id"}) {
      const auto it = obj.find(key);
      if (it == obj.end() || it->is_null()) continue;
      if (!it->is_string()) fail(ErrorKind::Parse, at + ": field \"" + key + "\" must be a string");
      (std::strcmp(key, "task") == 0 ? meta.task : meta.instruction_id) = it->get<std::string>();
    }

    if (const auto it = obj.find("label"); it != obj.end() && !it->is_null()) {
      if (!it->is_number_unsigned() || it->get<std::uint64_t>() >= kUnlabeled) {
        fail(ErrorKind::Parse, at + ": \"label\" must be a non-negative class index");
      }
      meta.label = it->get<std::uint32_t>();
    }

    if (const auto it = obj.find("fields"); it != obj.end() && !it->is_null()) {
      if (!it->is_object()) fail(ErrorKind::Parse, at + ": \"fields\" must be an object of strings");
      for (const auto& [name, value] : it->items()) {
        if (!value.is_string()) fail(ErrorKind::Parse, at + ": field \"" + name + "\" must be a string");
        meta.fields.emplace(name, value.get<std::string>());
      }
    }

    const auto [pos, inserted] = first_line.emplace(meta.example_id, line_no);
    if (!inserted) {
      fail(ErrorKind::Parse, at + ": duplicate example_id '" + meta.example_id + "' (first seen on line " +
                                 std::to_string(pos->second) + ")");
    }
    out.push_back(std::move(meta));
  }
  return out;
}

std::vector<ExampleMeta> read_meta(const std::filesystem::path& path) {
  return parse_meta(read_file(path), path.string());
}

std::string encode_meta(std::span<const ExampleMeta> records) {
  std::string out;
  for (const auto& m : records) {
    json obj = json::object();
    obj["example_id"] = m.example_id;
    if (!m.task.empty()) obj["task"] = m.task;
    if (!m.instruction_id.empty()) obj["instruction_id"] = m.instruction_id;
    if (m.label) obj["label"] = *m.label;
    if (!m.fields.empty()) obj["fields"] = m.fields;
    out += obj.dump();
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

std::string encode_checkpoint(const ProbeParams& params, const CheckpointMeta& meta) {
  params.validate();
  std::uint32_t flags = 0;
  if (params.options.score_scaling) flags |= 1u;
  if (params.options.score_mode == ScoreMode::Raw) flags |= 2u;
  ByteWriter w;
  w.bytes(kCheckpointMagic, 4);
  w.scalar<std::uint32_t>(kCheckpointVersion);
  w.scalar<std::uint32_t>(checked_u32(params.dim(), "dim"));
  w.scalar<std::uint32_t>(checked_u32(params.key_dim(), "key dim"));
  w.scalar<std::uint32_t>(checked_u32(params.n_classes(), "class count"));
  w.scalar<std::uint32_t>(flags);
  w.floats(params.key.values());
  w.floats(params.query.values());
  w.floats(params.weight.values());
  w.floats(params.bias.values());
  w.scalar<std::uint64_t>(meta.config_digest);
  return w.take();
}

std::pair<ProbeParams, CheckpointMeta> decode_checkpoint(std::string_view bytes) {
  ByteReader r(bytes, "ICPK");
  r.need(kCheckpointHeaderSize, "truncated header");
  if (!r.starts_with(kCheckpointMagic)) r.error("bad magic (expected \"ICPK\")", 0);
  r.scalar<std::uint32_t>();
  const auto version = r.scalar<std::uint32_t>();
  if (version != kCheckpointVersion) {
    fail(ErrorKind::Version, "ICPK: unsupported checkpoint version " + std::to_string(version) + " (expected " +
                                 std::to_string(kCheckpointVersion) + ")");
  }
  const auto d = r.scalar<std::uint32_t>();
  const auto dk = r.scalar<std::uint32_t>();
  const auto c = r.scalar<std::uint32_t>();
  const auto flags = r.scalar<std::uint32_t>();
  if (d == 0 || dk == 0 || c == 0) r.error("zero dimension in header", 8);
  if ((flags & ~3u) != 0) r.error("unsupported flags " + std::to_string(flags), 20);

  const std::uint64_t kq = static_cast<std::uint64_t>(dk) * d;
  const std::uint64_t wc = static_cast<std::uint64_t>(d) * c;
  const std::uint64_t body = (2 * kq + wc + c) * sizeof(float) + sizeof(std::uint64_t);
  if (body > r.remaining()) r.need(r.remaining() + 1, "truncated tensors");

  ProbeOptions options{(flags & 1u) != 0, (flags & 2u) != 0 ? ScoreMode::Raw : ScoreMode::Softmax};
  ProbeParams p;
  p.key = Matrix(dk, d, r.floats(kq, "K"));
  p.query = Matrix(dk, d, r.floats(kq, "Q"));
  p.weight = Matrix(d, c, r.floats(wc, "W"));
  p.bias = Vector(r.floats(c, "b"));
  p.options = options;
  CheckpointMeta meta{r.scalar<std::uint64_t>()};
  if (r.remaining() != 0) r.error(std::to_string(r.remaining()) + " bytes of trailing data", r.offset());
  return {std::move(p), meta};
}

void save_checkpoint(const ProbeParams& params, const CheckpointMeta& meta, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(params, meta));
}

std::pair<ProbeParams, CheckpointMeta> load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  try {
    return decode_checkpoint(bytes);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Predictions

std::string encode_predictions(std::span<const PredictionRow> rows, std::size_t n_classes) {
  std::string out = "example_id,gold,pred";
  for (std::size_t k = 0; k < n_classes; ++k) out += ",p_" + std::to_string(k);
  out += '\n';
  for (const auto& row : rows) {
    require(row.probs.empty() || row.probs.size() == n_classes, ErrorKind::Dimension,
            "prediction row '" + row.example_id + "' has " + std::to_string(row.probs.size()) +
                " probabilities, expected " + std::to_string(n_classes));
    out += csv::escape(row.example_id);
    out += ',';
    if (row.gold) out += std::to_string(*row.gold);
    out += ',';
    out += row.pred ? std::to_string(*row.pred) : std::string("abstain");
    for (std::size_t k = 0; k < n_classes; ++k) {
      out += ',';
      if (!row.probs.empty()) out += csv::format_float(row.probs[k]);
    }
    out += '\n';
  }
  return out;
}

std::vector<PredictionRow> parse_predictions(std::string_view text, std::string_view source) {
  const auto all = csv::lines(text);
  const std::string where(source);
  require(!all.empty(), ErrorKind::Parse, where + ": empty predictions table");
  std::vector<std::string> header;
  csv::split(all[0], header);
  require(header.size() >= 3 && header[0] == "example_id" && header[1] == "gold" && header[2] == "pred",
          ErrorKind::Parse, where + " line 1: header must start with example_id,gold,pred");
  const std::size_t n_classes = header.size() - 3;
  for (std::size_t k = 0; k < n_classes; ++k) {
    require(header[3 + k] == "p_" + std::to_string(k), ErrorKind::Parse,
            where + " line 1: expected column p_" + std::to_string(k) + ", found '" + header[3 + k] + "'");
  }

  std::vector<PredictionRow> rows;
  std::vector<std::string> fields;
  for (std::size_t i = 1; i < all.size(); ++i) {
    if (all[i].empty()) continue;
    const std::string at = where + " line " + std::to_string(i + 1);
    require(csv::split(all[i], fields), ErrorKind::Parse, at + ": unterminated quote");
    require(fields.size() == header.size(), ErrorKind::Parse,
            at + ": " + std::to_string(fields.size()) + " fields, header has " + std::to_string(header.size()));
    PredictionRow row;
    row.example_id = fields[0];
    if (!fields[1].empty()) {
      row.gold = parse_index(fields[1]);
      require(row.gold.has_value(), ErrorKind::Parse, at + ": unmapped label token '" + fields[1] + "' in gold");
    }
    if (!fields[2].empty() && fields[2] != "abstain") {
      row.pred = parse_index(fields[2]);
      require(row.pred.has_value(), ErrorKind::Parse, at + ": unmapped label token '" + fields[2] + "' in pred");
    }
    bool any_prob = false;
    for (std::size_t k = 0; k < n_classes; ++k) any_prob = any_prob || !fields[3 + k].empty();
    if (any_prob) {
      row.probs.resize(n_classes);
      for (std::size_t k = 0; k < n_classes; ++k) {
        const std::string& f = fields[3 + k];
        char* end = nullptr;
        row.probs[k] = std::strtof(f.c_str(), &end);
        require(!f.empty() && end == f.c_str() + f.size(), ErrorKind::Parse,
                at + ": bad probability '" + f + "' in column p_" + std::to_string(k));
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Datasets

bool Dataset::fully_labeled() const noexcept {
  return std::all_of(labels.begin(), labels.end(), [](const auto& l) { return l.has_value(); });
}

std::size_t Dataset::labeled_count() const noexcept {
  return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](const auto& l) { return l.has_value(); }));
}

Dataset make_dataset(std::vector<RepRecord> records, std::uint32_t dim, std::vector<ExampleMeta> meta) {
  require(meta.empty() || meta.size() == records.size(), ErrorKind::InvalidArgument,
          "metadata has " + std::to_string(meta.size()) + " records, representations have " +
              std::to_string(records.size()));
  Dataset data;
  data.dim = dim;
  const std::size_t n = records.size();
  const std::size_t width = std::max<std::size_t>(6, std::to_string(n).size());
  for (std::size_t i = 0; i < n; ++i) {
    std::optional<std::uint32_t> label = records[i].label;
    std::string id;
    if (!meta.empty()) {
      id = meta[i].example_id;
      if (meta[i].label) {
        require(!label || *label == *meta[i].label, ErrorKind::InvalidArgument,
                "example '" + id + "': metadata label " + std::to_string(*meta[i].label) +
                    " disagrees with container label " + std::to_string(*label));
        label = meta[i].label;
      }
    } else {
      id = std::to_string(i);
      id.insert(0, width - id.size(), '0');
    }
    data.sequences.push_back(std::make_shared<const RepSequence>(std::move(records[i].reps)));
    data.labels.push_back(label);
    data.ids.push_back(std::move(id));
  }
  data.meta = std::move(meta);
  return data;
}

Dataset load_dataset(const std::filesystem::path& reps_path, const std::optional<std::filesystem::path>& meta_path) {
  std::uint32_t dim = 0;
  auto records = read_reps(reps_path, &dim);
  std::vector<ExampleMeta> meta;
  if (meta_path) meta = read_meta(*meta_path);
  return make_dataset(std::move(records), dim, std::move(meta));
}

LabeledSet to_labeled_set(const Dataset& data, std::optional<std::size_t> n_classes) {
  std::size_t max_label = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    require(data.labels[i].has_value(), ErrorKind::InvalidArgument,
            "example '" + data.ids[i] + "' is unlabeled; labels are required");
    max_label = std::max<std::size_t>(max_label, *data.labels[i]);
  }
  LabeledSet set(n_classes.value_or(std::max<std::size_t>(2, max_label + 1)), data.dim);
  for (std::size_t i = 0; i < data.size(); ++i) set.add({data.sequences[i], *data.labels[i], data.ids[i]});
  return set;
}

std::string encode_history(const TrainHistory& history) {
  std::string out = "epoch,train_loss,train_macro_f1,val_macro_f1,best\n";
  for (const auto& e : history.epochs) {
    out += std::to_string(e.epoch) + ',' + csv::format_double(e.train_loss) + ',' +
           csv::format_double(e.train_macro_f1) + ',' + csv::format_double(e.val_macro_f1) + ',' + (e.epoch == history.best_epoch ? "1" : "0") + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Files

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open '" + path.string() + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  require(!in.bad(), ErrorKind::Io, "failed reading '" + path.string() + "'");
  return std::move(buf).str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot open '" + tmp.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      fail(ErrorKind::Io, "failed writing '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::error_code ignored;
    std::filesystem::remove(tmp, ignored);
    fail(ErrorKind::Io, "cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
  }
}

}  // namespace icprobe
