#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>
#include <variant>

#include "tabalign/common.hpp"

namespace tabalign {

enum class ColumnKind { numeric, categorical };

struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  std::vector<std::string> categories;  // fixed order, categorical only
};

struct Schema {
  std::vector<Column> columns;

  size_t size() const { return columns.size(); }

  int index_of(std::string_view name) const {
    for (size_t i = 0; i < columns.size(); ++i)
      if (columns[i].name == name) return static_cast<int>(i);
    return -1;
  }

  void validate() const {
    std::unordered_set<std::string> seen;
    for (const auto& c : columns) {
      if (c.name.empty()) throw DataError("schema: empty column name");
      if (!seen.insert(c.name).second)
        throw DataError("schema: duplicate column name '" + c.name + "'");
      if (c.kind == ColumnKind::categorical && c.categories.empty())
        throw DataError("schema: categorical column '" + c.name +
                        "' has no categories");
    }
  }

  bool operator==(const Schema& other) const {
    if (columns.size() != other.columns.size()) return false;
    for (size_t i = 0; i < columns.size(); ++i) {
      if (columns[i].name != other.columns[i].name ||
          columns[i].kind != other.columns[i].kind ||
          columns[i].categories != other.columns[i].categories)
        return false;
    }
    return true;
  }
};

using Cell = std::variant<double, std::string>;
using Record = std::vector<Cell>;

inline double num(const Cell& c) { return std::get<double>(c); }
inline const std::string& cat(const Cell& c) { return std::get<std::string>(c); }

struct Table {
  Schema schema;
  std::vector<Record> rows;
  std::vector<int64_t> row_ids;

  size_t size() const { return rows.size(); }
  bool empty() const { return rows.empty(); }

  void validate() const {
    schema.validate();
    if (rows.size() != row_ids.size())
      throw DataError("table: row_ids length mismatch");
    std::unordered_set<int64_t> ids;
    for (int64_t id : row_ids)
      if (!ids.insert(id).second) throw DataError("table: duplicate row_id");
    for (const auto& r : rows) {
      if (r.size() != schema.size())
        throw DataError("table: row width does not match schema");
      for (size_t j = 0; j < r.size(); ++j) {
        const Column& col = schema.columns[j];
        if (col.kind == ColumnKind::numeric) {
          if (!std::holds_alternative<double>(r[j]) ||
              !std::isfinite(num(r[j])))
            throw DataError("table: non-finite or non-numeric value in '" +
                            col.name + "'");
        } else {
          if (!std::holds_alternative<std::string>(r[j]))
            throw DataError("table: non-categorical value in '" + col.name +
                            "'");
          if (std::find(col.categories.begin(), col.categories.end(),
                        cat(r[j])) == col.categories.end())
            throw DataError("table: unknown category '" + cat(r[j]) +
                            "' in column '" + col.name + "'");
        }
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Numeric rendering. Values are rendered with 6 significant digits in plain
// fixed notation (never exponent form) so that digit-level tokenization only
// ever needs the characters 0-9, '.' and '-'.

inline std::string format_numeric(double v) {
  if (!std::isfinite(v)) throw DataError("format_numeric: non-finite value");
  if (v == 0.0) return "0";
  const double a = std::abs(v);
  int decimals = 5 - static_cast<int>(std::floor(std::log10(a)));
  if (decimals < 0) {
    const double scale = std::pow(10.0, -decimals);
    v = std::round(v / scale) * scale;
    decimals = 0;
  }
  if (decimals > 330) decimals = 330;
  char buf[512];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s(buf);
  if (s.find('.') != std::string::npos) {
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
  }
  if (s == "-0") s = "0";
  return s;
}

inline bool parse_plain_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  size_t i = 0;
  if (s[0] == '-') i = 1;
  bool digits = false, dot = false;
  for (; i < s.size(); ++i) {
    if (s[i] >= '0' && s[i] <= '9') {
      digits = true;
    } else if (s[i] == '.') {
      if (dot) return false;
      dot = true;
    } else {
      return false;
    }
  }
  if (!digits) return false;
  out = std::strtod(s.c_str(), nullptr);
  return std::isfinite(out);
}

// ---------------------------------------------------------------------------
// Vocabulary and token sequences.

enum class NumericMode { digit, binned };

struct NumericModeSpec {
  NumericMode mode = NumericMode::digit;
  int bins = 4;  // binned mode only
};

struct TokenSequence {
  std::vector<int> ids;

  size_t size() const { return ids.size(); }
};

struct Vocabulary {
  std::vector<std::string> tokens;
  std::unordered_map<std::string, int> index;
  int bos = -1, eos = -1, sep = -1, is_tok = -1;
  NumericModeSpec numeric_mode;
  // binned mode: per numeric column, interior bin edges and bin midpoints
  std::map<std::string, std::vector<double>> bin_edges;
  std::map<std::string, std::vector<double>> bin_midpoints;

  int add(const std::string& tok) {
    auto it = index.find(tok);
    if (it != index.end()) return it->second;
    const int id = static_cast<int>(tokens.size());
    tokens.push_back(tok);
    index.emplace(tok, id);
    return id;
  }

  int id(const std::string& tok) const {
    auto it = index.find(tok);
    if (it == index.end()) throw DataError("vocabulary: unknown token '" + tok + "'");
    return it->second;
  }

  bool has(const std::string& tok) const { return index.count(tok) > 0; }

  const std::string& token(int id) const {
    if (id < 0 || id >= static_cast<int>(tokens.size()))
      throw DataError("vocabulary: token id out of range");
    return tokens[static_cast<size_t>(id)];
  }

  size_t size() const { return tokens.size(); }

  static std::string bin_token(const std::string& col, int bin) {
    return col + ":b" + std::to_string(bin);
  }
};

// ---------------------------------------------------------------------------
// CSV loading. UTF-8, comma separated, header row, no quoting.

inline std::vector<std::string> split_csv_line(const std::string& line,
                                               size_t line_no) {
  if (line.find('"') != std::string::npos)
    throw DataError("csv: quoted fields are not supported (line " +
                    std::to_string(line_no) + ")");
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

inline Table load_csv(const std::string& path,
                      const std::optional<Schema>& schema_hint = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw DataError("csv: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("csv: empty table in '" + path + "'");
  const std::vector<std::string> header = split_csv_line(line, 1);

  std::vector<std::vector<std::string>> raw;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_csv_line(line, line_no);
    if (fields.size() != header.size())
      throw DataError("csv: ragged row at line " + std::to_string(line_no));
    for (const auto& f : fields)
      if (f.empty())
        throw DataError("csv: empty value at line " + std::to_string(line_no));
    raw.push_back(std::move(fields));
  }
  if (raw.empty()) throw DataError("csv: empty table in '" + path + "'");

  Schema schema;
  if (schema_hint) {
    schema = *schema_hint;
    if (schema.size() != header.size())
      throw DataError("csv: schema hint width does not match header");
    for (size_t j = 0; j < header.size(); ++j)
      if (schema.columns[j].name != header[j])
        throw DataError("csv: schema hint column '" + schema.columns[j].name +
                        "' does not match header '" + header[j] + "'");
  } else {
    // Infer: a column is numeric iff every value parses as a plain number.
    for (size_t j = 0; j < header.size(); ++j) {
      Column col;
      col.name = header[j];
      bool all_numeric = true;
      double tmp;
      for (const auto& row : raw)
        if (!parse_plain_number(row[j], tmp)) {
          all_numeric = false;
          break;
        }
      if (all_numeric) {
        col.kind = ColumnKind::numeric;
      } else {
        col.kind = ColumnKind::categorical;
        std::vector<std::string> cats;
        std::unordered_set<std::string> seen;
        for (const auto& row : raw)
          if (seen.insert(row[j]).second) cats.push_back(row[j]);
        col.categories = std::move(cats);
      }
      schema.columns.push_back(std::move(col));
    }
  }

  Table t;
  t.schema = schema;
  t.rows.reserve(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    Record rec;
    rec.reserve(schema.size());
    for (size_t j = 0; j < schema.size(); ++j) {
      const Column& col = schema.columns[j];
      if (col.kind == ColumnKind::numeric) {
        double v;
        if (!parse_plain_number(raw[i][j], v))
          throw DataError("csv: value '" + raw[i][j] +
                          "' outside numeric column '" + col.name + "'");
        rec.emplace_back(v);
      } else {
        if (std::find(col.categories.begin(), col.categories.end(),
                      raw[i][j]) == col.categories.end())
          throw DataError("csv: value '" + raw[i][j] +
                          "' outside hinted categories of '" + col.name + "'");
        rec.emplace_back(raw[i][j]);
      }
    }
    t.rows.push_back(std::move(rec));
    t.row_ids.push_back(static_cast<int64_t>(i));
  }
  t.validate();
  return t;
}

inline std::string cell_to_string(const Cell& c) {
  if (std::holds_alternative<double>(c)) return format_numeric(num(c));
  return cat(c);
}

inline void write_csv(const Table& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("csv: cannot write '" + path + "'");
  for (size_t j = 0; j < t.schema.size(); ++j) {
    if (j) out << ',';
    out << t.schema.columns[j].name;
  }
  out << '\n';
  for (const auto& row : t.rows) {
    for (size_t j = 0; j < row.size(); ++j) {
      if (j) out << ',';
      out << cell_to_string(row[j]);
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Train/val/test split. Sizes are floor-based with the remainder assigned to
// the training partition.

struct SplitRatios {
  double train = 0.8, val = 0.1, test = 0.1;
};

struct SplitTables {
  Table train, val, test;
};

inline Table subset_by_index(const Table& t, const std::vector<size_t>& idx) {
  Table out;
  out.schema = t.schema;
  out.rows.reserve(idx.size());
  out.row_ids.reserve(idx.size());
  for (size_t i : idx) {
    out.rows.push_back(t.rows[i]);
    out.row_ids.push_back(t.row_ids[i]);
  }
  return out;
}

inline SplitTables split(const Table& table, SplitRatios ratios, uint64_t seed) {
  if (ratios.train <= 0 || ratios.val <= 0 || ratios.test <= 0)
    throw DataError("split: ratios must be positive");
  if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
    throw DataError("split: ratios must sum to 1");
  const size_t n = table.size();
  const size_t n_val = static_cast<size_t>(std::floor(static_cast<double>(n) * ratios.val));
  const size_t n_test = static_cast<size_t>(std::floor(static_cast<double>(n) * ratios.test));
  if (n_val == 0 || n_test == 0 || n_val + n_test >= n)
    throw DataError("split: a partition would be empty");

  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  Rng rng(derive_seed(seed, "split"));
  rng.shuffle(idx);

  const size_t n_train = n - n_val - n_test;
  SplitTables out;
  out.train = subset_by_index(table, {idx.begin(), idx.begin() + n_train});
  out.val = subset_by_index(table, {idx.begin() + n_train, idx.begin() + n_train + n_val});
  out.test = subset_by_index(table, {idx.begin() + n_train + n_val, idx.end()});
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary construction. Token order is fixed by construction so repeated
// builds on the same table give the same ordered token list.

inline const char* kBos = "<bos>";
inline const char* kEos = "<eos>";
inline const char* kSep = ",";
inline const char* kIs = "is";

inline Vocabulary build_vocab(const Table& table, NumericModeSpec mode = {}) {
  if (table.empty()) throw DataError("build_vocab: empty table");
  if (mode.mode == NumericMode::binned && mode.bins < 2)
    throw DataError("build_vocab: bin count must be >= 2");

  Vocabulary v;
  v.numeric_mode = mode;
  v.bos = v.add(kBos);
  v.eos = v.add(kEos);
  v.sep = v.add(kSep);
  v.is_tok = v.add(kIs);

  bool any_numeric = false;
  for (const auto& c : table.schema.columns)
    if (c.kind == ColumnKind::numeric) any_numeric = true;
  if (any_numeric && mode.mode == NumericMode::digit) {
    for (char c = '0'; c <= '9'; ++c) v.add(std::string(1, c));
    v.add(".");
    v.add("-");
  }

  for (size_t j = 0; j < table.schema.size(); ++j) {
    const Column& col = table.schema.columns[j];
    v.add(col.name);
    if (col.kind == ColumnKind::categorical) {
      for (const auto& c : col.categories) v.add(c);
    } else if (mode.mode == NumericMode::binned) {
      std::vector<double> vals;
      vals.reserve(table.size());
      for (const auto& r : table.rows) vals.push_back(num(r[j]));
      std::sort(vals.begin(), vals.end());
      // Interior quantile edges; k bins need k-1 interior cuts.
      std::vector<double> edges;
      for (int b = 1; b < mode.bins; ++b)
        edges.push_back(quantile_sorted(vals, static_cast<double>(b) / mode.bins));
      std::vector<double> mids;
      const double lo = vals.front(), hi = vals.back();
      for (int b = 0; b < mode.bins; ++b) {
        const double a = (b == 0) ? lo : edges[static_cast<size_t>(b - 1)];
        const double z = (b == mode.bins - 1) ? hi : edges[static_cast<size_t>(b)];
        mids.push_back(0.5 * (a + z));
        v.add(Vocabulary::bin_token(col.name, b));
      }
      v.bin_edges[col.name] = std::move(edges);
      v.bin_midpoints[col.name] = std::move(mids);
    }
  }
  return v;
}

// ---------------------------------------------------------------------------
// Row serialization: BOS, then per column "name is value" with SEP between
// columns, then EOS.

struct ColumnOrder {
  bool permuted = false;
  uint64_t seed = 0;

  static ColumnOrder schema_order() { return {}; }
  static ColumnOrder permuted_order(uint64_t seed) { return {true, seed}; }
};

inline int bin_index_for(const Vocabulary& vocab, const std::string& col,
                         double value) {
  const auto& edges = vocab.bin_edges.at(col);
  int b = 0;
  while (b < static_cast<int>(edges.size()) && value > edges[static_cast<size_t>(b)]) ++b;
  return b;
}

inline TokenSequence serialize_row(const Record& row, const Schema& schema,
                                   const Vocabulary& vocab,
                                   ColumnOrder order = {},
                                   size_t context_limit = 0) {
  if (row.size() != schema.size())
    throw DataError("serialize_row: row width does not match schema");

  std::vector<size_t> cols(schema.size());
  std::iota(cols.begin(), cols.end(), size_t{0});
  if (order.permuted) {
    Rng rng(derive_seed(order.seed, "column-order"));
    rng.shuffle(cols);
  }

  TokenSequence seq;
  seq.ids.push_back(vocab.bos);
  for (size_t k = 0; k < cols.size(); ++k) {
    const size_t j = cols[k];
    const Column& col = schema.columns[j];
    seq.ids.push_back(vocab.id(col.name));
    seq.ids.push_back(vocab.is_tok);
    if (col.kind == ColumnKind::categorical) {
      seq.ids.push_back(vocab.id(cat(row[j])));
    } else if (vocab.numeric_mode.mode == NumericMode::digit) {
      for (char c : format_numeric(num(row[j])))
        seq.ids.push_back(vocab.id(std::string(1, c)));
    } else {
      const int b = bin_index_for(vocab, col.name, num(row[j]));
      seq.ids.push_back(vocab.id(Vocabulary::bin_token(col.name, b)));
    }
    if (k + 1 < cols.size()) seq.ids.push_back(vocab.sep);
  }
  seq.ids.push_back(vocab.eos);

  if (context_limit > 0 && seq.ids.size() > context_limit)
    throw DataError("serialize_row: sequence exceeds context limit");
  return seq;
}

// ---------------------------------------------------------------------------
// Parsing generated sequences back into records.

enum class ParseFailure {
  none,
  missing_column,
  duplicate_column,
  malformed_number,
  unknown_category,
  bad_template,
};

inline const char* to_string(ParseFailure f) {
  switch (f) {
    case ParseFailure::none: return "none";
    case ParseFailure::missing_column: return "missing column";
    case ParseFailure::duplicate_column: return "duplicate column";
    case ParseFailure::malformed_number: return "malformed number";
    case ParseFailure::unknown_category: return "unknown category";
    case ParseFailure::bad_template: return "bad template";
  }
  return "?";
}

struct ParseResult {
  std::optional<Record> record;
  ParseFailure failure = ParseFailure::none;
  std::string detail;

  bool ok() const { return record.has_value(); }

  static ParseResult reject(ParseFailure f, std::string d = {}) {
    ParseResult r;
    r.failure = f;
    r.detail = std::move(d);
    return r;
  }
};

/// Accepts iff every schema column appears exactly once with a well-formed
/// value. Column segments may appear in any order.
inline ParseResult parse_generated(const TokenSequence& seq, const Schema& schema,
                                   const Vocabulary& vocab) {
  const auto& ids = seq.ids;
  if (ids.size() < 3 || ids.front() != vocab.bos || ids.back() != vocab.eos)
    return ParseResult::reject(ParseFailure::bad_template, "missing BOS/EOS frame");
  for (size_t i = 1; i + 1 < ids.size(); ++i)
    if (ids[i] == vocab.bos || ids[i] == vocab.eos)
      return ParseResult::reject(ParseFailure::bad_template, "interior BOS/EOS");

  // Split interior tokens into column segments on SEP.
  std::vector<std::vector<int>> segments(1);
  for (size_t i = 1; i + 1 < ids.size(); ++i) {
    if (ids[i] == vocab.sep)
      segments.emplace_back();
    else
      segments.back().push_back(ids[i]);
  }

  Record rec(schema.size());
  std::vector<bool> seen(schema.size(), false);
  for (const auto& seg : segments) {
    if (seg.size() < 3)
      return ParseResult::reject(ParseFailure::bad_template, "short column segment");
    const std::string& name = vocab.token(seg[0]);
    const int j = schema.index_of(name);
    if (j < 0)
      return ParseResult::reject(ParseFailure::bad_template,
                                 "unknown column '" + name + "'");
    if (vocab.token(seg[1]) != kIs)
      return ParseResult::reject(ParseFailure::bad_template, "missing 'is'");
    if (seen[static_cast<size_t>(j)])
      return ParseResult::reject(ParseFailure::duplicate_column, name);
    seen[static_cast<size_t>(j)] = true;

    const Column& col = schema.columns[static_cast<size_t>(j)];
    if (col.kind == ColumnKind::categorical) {
      if (seg.size() != 3)
        return ParseResult::reject(ParseFailure::unknown_category,
                                   "multi-token category in '" + name + "'");
      const std::string& value = vocab.token(seg[2]);
      if (std::find(col.categories.begin(), col.categories.end(), value) ==
          col.categories.end())
        return ParseResult::reject(ParseFailure::unknown_category, value);
      rec[static_cast<size_t>(j)] = value;
    } else if (vocab.numeric_mode.mode == NumericMode::digit) {
      std::string digits;
      for (size_t k = 2; k < seg.size(); ++k) digits += vocab.token(seg[k]);
      double v;
      if (!parse_plain_number(digits, v))
        return ParseResult::reject(ParseFailure::malformed_number, digits);
      rec[static_cast<size_t>(j)] = v;
    } else {
      if (seg.size() != 3)
        return ParseResult::reject(ParseFailure::malformed_number,
                                   "multi-token bin value in '" + name + "'");
      const std::string& tok = vocab.token(seg[2]);
      const auto& mids = vocab.bin_midpoints.count(name)
                             ? vocab.bin_midpoints.at(name)
                             : std::vector<double>{};
      bool matched = false;
      for (size_t b = 0; b < mids.size(); ++b) {
        if (tok == Vocabulary::bin_token(name, static_cast<int>(b))) {
          rec[static_cast<size_t>(j)] = mids[b];
          matched = true;
          break;
        }
      }
      if (!matched)
        return ParseResult::reject(ParseFailure::malformed_number,
                                   "not a bin token: '" + tok + "'");
    }
  }

  for (size_t j = 0; j < schema.size(); ++j)
    if (!seen[j])
      return ParseResult::reject(ParseFailure::missing_column,
                                 schema.columns[j].name);

  ParseResult r;
  r.record = std::move(rec);
  return r;
}

// ---------------------------------------------------------------------------
// Deterministic toy dataset: a mixture of clusters over mixed-type columns
// with a binary label tied to the cluster identity.

struct ToySpec {
  size_t n_rows = 200;
  size_t n_numeric = 2;
  size_t n_categorical = 1;
  size_t cluster_count = 2;
};

inline Table make_toy(const ToySpec& spec, uint64_t seed) {
  if (spec.n_rows == 0 || spec.n_numeric == 0 || spec.n_categorical == 0 ||
      spec.cluster_count == 0)
    throw DataError("make_toy: all counts must be positive");

  constexpr int kCats = 3;
  Schema schema;
  for (size_t j = 0; j < spec.n_numeric; ++j)
    schema.columns.push_back({"x" + std::to_string(j), ColumnKind::numeric, {}});
  for (size_t j = 0; j < spec.n_categorical; ++j) {
    Column c{"cat" + std::to_string(j), ColumnKind::categorical, {}};
    for (int k = 0; k < kCats; ++k) c.categories.push_back("c" + std::to_string(k));
    schema.columns.push_back(std::move(c));
  }
  schema.columns.push_back({"label", ColumnKind::categorical, {"neg", "pos"}});

  Rng centers_rng(derive_seed(seed, "toy-centers"));
  std::vector<std::vector<double>> centers(spec.cluster_count);
  for (auto& c : centers) {
    c.resize(spec.n_numeric);
    for (auto& v : c) v = centers_rng.uniform(2.0, 8.0);
  }

  Rng rng(derive_seed(seed, "toy-rows"));
  Table t;
  t.schema = schema;
  for (size_t i = 0; i < spec.n_rows; ++i) {
    const size_t cl = static_cast<size_t>(rng.uniform_int(spec.cluster_count));
    Record rec;
    for (size_t j = 0; j < spec.n_numeric; ++j) {
      double v = centers[cl][j] + rng.normal(0.0, 0.6);
      v = std::clamp(v, 0.0, 10.0);
      v = std::round(v * 10.0) / 10.0;  // one decimal keeps sequences short
      rec.emplace_back(v);
    }
    for (size_t j = 0; j < spec.n_categorical; ++j) {
      const int preferred = static_cast<int>((cl + j) % kCats);
      int pick;
      if (rng.uniform() < 0.8) {
        pick = preferred;
      } else {
        pick = static_cast<int>(rng.uniform_int(kCats - 1));
        if (pick >= preferred) ++pick;
      }
      rec.emplace_back("c" + std::to_string(pick));
    }
    rec.emplace_back(std::string(cl % 2 == 0 ? "neg" : "pos"));
    t.rows.push_back(std::move(rec));
    t.row_ids.push_back(static_cast<int64_t>(i));
  }
  t.validate();
  return t;
}

}  // namespace tabalign
