#include "tabalign/dataset.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace tabalign;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path);
  out << content;
  return path.string();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> tokens_of(const TokenSequence& seq, const Vocabulary& v) {
  std::vector<std::string> out;
  for (int id : seq.ids) out.push_back(v.token(id));
  return out;
}

TEST(LoadCsv, InfersColumnKinds) {
  const auto path = write_temp("infer.csv", "a,b\n1,x\n2,y\n");
  Table t = load_csv(path);
  ASSERT_EQ(t.schema.size(), 2u);
  EXPECT_EQ(t.schema.columns[0].kind, ColumnKind::numeric);
  EXPECT_EQ(t.schema.columns[1].kind, ColumnKind::categorical);
  EXPECT_EQ(t.schema.columns[1].categories, (std::vector<std::string>{"x", "y"}));
  EXPECT_EQ(t.row_ids, (std::vector<int64_t>{0, 1}));
  EXPECT_DOUBLE_EQ(num(t.rows[1][0]), 2.0);
}

TEST(LoadCsv, EmptyFileErrors) {
  const auto path = write_temp("empty.csv", "");
  EXPECT_THROW(load_csv(path), DataError);
  const auto header_only = write_temp("header_only.csv", "a,b\n");
  try {
    load_csv(header_only);
    FAIL() << "expected error";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("empty table"), std::string::npos);
  }
}

TEST(LoadCsv, RaggedRowNamesLine) {
  const auto path = write_temp("ragged.csv", "a,b\n1,x\n1,x,z\n");
  try {
    load_csv(path);
    FAIL() << "expected error";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("ragged row at line 3"), std::string::npos);
  }
}

TEST(LoadCsv, MissingFileAndHintViolations) {
  EXPECT_THROW(load_csv("/nonexistent/nope.csv"), DataError);
  Schema hint;
  hint.columns.push_back({"a", ColumnKind::numeric, {}});
  hint.columns.push_back({"b", ColumnKind::categorical, {"x"}});
  const auto path = write_temp("hinted.csv", "a,b\n1,x\n2,y\n");
  EXPECT_THROW(load_csv(path, hint), DataError);  // 'y' outside hinted categories
}

TEST(Split, ExactDivision) {
  Table t = make_toy({10, 1, 1, 2}, 3);
  auto s = split(t, {0.8, 0.1, 0.1}, 7);
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.val.size(), 1u);
  EXPECT_EQ(s.test.size(), 1u);
}

TEST(Split, FloorRuleRemainderToTrain) {
  // Oracle: enumerate the rule directly. n=11, ratios (0.8, 0.1, 0.1):
  // floor(11*0.1)=1 to val, floor(11*0.1)=1 to test, remainder 9 to train.
  const size_t n = 11;
  const size_t want_val = static_cast<size_t>(std::floor(n * 0.1));
  const size_t want_test = static_cast<size_t>(std::floor(n * 0.1));
  const size_t want_train = n - want_val - want_test;
  ASSERT_EQ(want_train, 9u);

  Table t = make_toy({n, 1, 1, 2}, 3);
  auto s = split(t, {0.8, 0.1, 0.1}, 11);
  EXPECT_EQ(s.train.size(), want_train);
  EXPECT_EQ(s.val.size(), want_val);
  EXPECT_EQ(s.test.size(), want_test);
}

TEST(Split, DeterministicDisjointCovering) {
  Table t = make_toy({37, 2, 1, 3}, 5);
  auto a = split(t, {0.8, 0.1, 0.1}, 21);
  auto b = split(t, {0.8, 0.1, 0.1}, 21);
  EXPECT_EQ(a.train.row_ids, b.train.row_ids);
  EXPECT_EQ(a.val.row_ids, b.val.row_ids);
  EXPECT_EQ(a.test.row_ids, b.test.row_ids);

  std::set<int64_t> all;
  for (const auto* part : {&a.train, &a.val, &a.test})
    for (int64_t id : part->row_ids) EXPECT_TRUE(all.insert(id).second);
  EXPECT_EQ(all.size(), t.size());
}

TEST(Split, RejectsBadRatiosAndEmptyParts) {
  Table t = make_toy({10, 1, 1, 2}, 3);
  EXPECT_THROW(split(t, {0.8, 0.15, 0.1}, 1), DataError);
  Table tiny = make_toy({3, 1, 1, 2}, 3);
  EXPECT_THROW(split(tiny, {0.8, 0.1, 0.1}, 1), DataError);
}

TEST(BuildVocab, DigitModeContents) {
  const auto path = write_temp("vocab.csv", "colA,colB\n1.5,x\n-2,y\n");
  Table t = load_csv(path);
  Vocabulary v = build_vocab(t);
  for (const std::string tok :
       {"<bos>", "<eos>", ",", "is", "colA", "colB", "x", "y", "0", "1", "2",
        "3", "4", "5", "6", "7", "8", "9", ".", "-"})
    EXPECT_TRUE(v.has(tok)) << tok;
}

TEST(BuildVocab, BinModeMakesBinTokensPerNumericColumn) {
  Table t = make_toy({50, 1, 1, 2}, 9);
  Vocabulary v = build_vocab(t, {NumericMode::binned, 4});
  int bins = 0;
  for (const auto& tok : v.tokens)
    if (tok.rfind("x0:b", 0) == 0) ++bins;
  EXPECT_EQ(bins, 4);
  EXPECT_EQ(v.bin_midpoints.at("x0").size(), 4u);
}

TEST(BuildVocab, DuplicateCategorySingleEntryAndIdempotent) {
  const auto path = write_temp("dupes.csv", "b\nx\nx\ny\n");
  Table t = load_csv(path);
  Vocabulary v1 = build_vocab(t);
  int count_x = 0;
  for (const auto& tok : v1.tokens)
    if (tok == "x") ++count_x;
  EXPECT_EQ(count_x, 1);
  Vocabulary v2 = build_vocab(t);
  EXPECT_EQ(v1.tokens, v2.tokens);
}

Schema person_schema() {
  Schema s;
  s.columns.push_back({"age", ColumnKind::numeric, {}});
  s.columns.push_back({"sex", ColumnKind::categorical, {"male", "female"}});
  return s;
}

Table person_table() {
  Table t;
  t.schema = person_schema();
  t.rows.push_back({Cell{30.0}, Cell{std::string("male")}});
  t.rows.push_back({Cell{3.5}, Cell{std::string("female")}});
  t.row_ids = {0, 1};
  return t;
}

TEST(SerializeRow, SchemaOrderTemplate) {
  Table t = person_table();
  Vocabulary v = build_vocab(t);
  TokenSequence seq = serialize_row(t.rows[0], t.schema, v);
  EXPECT_EQ(tokens_of(seq, v),
            (std::vector<std::string>{"<bos>", "age", "is", "3", "0", ",",
                                      "sex", "is", "male", "<eos>"}));
}

TEST(SerializeRow, PermutedOrderSwapsColumns) {
  Table t = person_table();
  Vocabulary v = build_vocab(t);
  // Scan for a seed whose 2-column permutation is the swap; the order is a
  // deterministic function of the seed, so the found seed is stable.
  uint64_t swap_seed = 0;
  bool found = false;
  for (uint64_t s = 0; s < 16 && !found; ++s) {
    TokenSequence seq =
        serialize_row(t.rows[0], t.schema, v, ColumnOrder::permuted_order(s));
    if (v.token(seq.ids[1]) == "sex") {
      swap_seed = s;
      found = true;
    }
  }
  ASSERT_TRUE(found);
  TokenSequence seq = serialize_row(t.rows[0], t.schema, v,
                                    ColumnOrder::permuted_order(swap_seed));
  EXPECT_EQ(tokens_of(seq, v),
            (std::vector<std::string>{"<bos>", "sex", "is", "male", ",",
                                      "age", "is", "3", "0", "<eos>"}));
}

TEST(SerializeRow, DecimalDigits) {
  Table t = person_table();
  Vocabulary v = build_vocab(t);
  TokenSequence seq = serialize_row(t.rows[1], t.schema, v);
  EXPECT_EQ(tokens_of(seq, v),
            (std::vector<std::string>{"<bos>", "age", "is", "3", ".", "5", ",",
                                      "sex", "is", "female", "<eos>"}));
}

TEST(SerializeRow, ContextLimitEnforced) {
  Table t = person_table();
  Vocabulary v = build_vocab(t);
  EXPECT_THROW(serialize_row(t.rows[0], t.schema, v, {}, 5), DataError);
}

TEST(ParseGenerated, RoundTripIdentity) {
  Table t = person_table();
  Vocabulary v = build_vocab(t);
  for (const auto& row : t.rows) {
    auto r = parse_generated(serialize_row(row, t.schema, v), t.schema, v);
    ASSERT_TRUE(r.ok());
    EXPECT_EQ(*r.record, row);
  }
}

TEST(ParseGenerated, RoundTripPermutedOrder) {
  Table t = person_table();
  Vocabulary v = build_vocab(t);
  auto seq = serialize_row(t.rows[0], t.schema, v, ColumnOrder::permuted_order(4));
  auto r = parse_generated(seq, t.schema, v);
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(*r.record, t.rows[0]);
}

TEST(ParseGenerated, RejectionReasons) {
  Table t = person_table();
  Vocabulary v = build_vocab(t);

  // missing column: drop the sex segment
  TokenSequence missing;
  for (const std::string tok : {"<bos>", "age", "is", "3", "0", "<eos>"})
    missing.ids.push_back(v.id(tok));
  EXPECT_EQ(parse_generated(missing, t.schema, v).failure,
            ParseFailure::missing_column);

  // malformed number: '-' in the middle of digits
  TokenSequence malformed;
  for (const std::string tok : {"<bos>", "age", "is", "3", "-", "0", ",", "sex",
                                "is", "male", "<eos>"})
    malformed.ids.push_back(v.id(tok));
  EXPECT_EQ(parse_generated(malformed, t.schema, v).failure,
            ParseFailure::malformed_number);

  // duplicate column
  TokenSequence dup;
  for (const std::string tok : {"<bos>", "age", "is", "3", ",", "age", "is",
                                "4", ",", "sex", "is", "male", "<eos>"})
    dup.ids.push_back(v.id(tok));
  EXPECT_EQ(parse_generated(dup, t.schema, v).failure,
            ParseFailure::duplicate_column);

  // unknown category: digit token where a category is expected
  TokenSequence badcat;
  for (const std::string tok : {"<bos>", "age", "is", "3", ",", "sex", "is",
                                "7", "<eos>"})
    badcat.ids.push_back(v.id(tok));
  EXPECT_EQ(parse_generated(badcat, t.schema, v).failure,
            ParseFailure::unknown_category);

  // bad template: no BOS
  TokenSequence frame;
  for (const std::string tok : {"age", "is", "3", "<eos>"})
    frame.ids.push_back(v.id(tok));
  EXPECT_EQ(parse_generated(frame, t.schema, v).failure,
            ParseFailure::bad_template);
}

TEST(ParseGenerated, BinModeRoundTripsToMidpoints) {
  Table t = make_toy({60, 2, 1, 2}, 17);
  Vocabulary v = build_vocab(t, {NumericMode::binned, 4});
  for (size_t i = 0; i < 10; ++i) {
    auto seq = serialize_row(t.rows[i], t.schema, v);
    auto r = parse_generated(seq, t.schema, v);
    ASSERT_TRUE(r.ok());
    for (size_t j = 0; j < t.schema.size(); ++j) {
      if (t.schema.columns[j].kind != ColumnKind::numeric) {
        EXPECT_EQ((*r.record)[j], t.rows[i][j]);
        continue;
      }
      const int b = bin_index_for(v, t.schema.columns[j].name, num(t.rows[i][j]));
      EXPECT_DOUBLE_EQ(num((*r.record)[j]),
                       v.bin_midpoints.at(t.schema.columns[j].name)[static_cast<size_t>(b)]);
    }
  }
}

TEST(RoundTrip, RandomRowsDigitMode) {
  // Property: random valid rows round-trip; values drawn representable at
  // 6 significant digits.
  Rng rng(99);
  Schema s;
  s.columns.push_back({"a", ColumnKind::numeric, {}});
  s.columns.push_back({"k", ColumnKind::categorical, {"u", "v", "w"}});
  s.columns.push_back({"b", ColumnKind::numeric, {}});
  Table t;
  t.schema = s;
  t.rows.push_back({Cell{1.0}, Cell{std::string("u")}, Cell{2.0}});
  t.row_ids = {0};
  Vocabulary v = build_vocab(t);

  for (int it = 0; it < 200; ++it) {
    const double a = std::round(rng.uniform(-5000.0, 5000.0) * 100.0) / 100.0;
    const double b = std::round(rng.uniform(-1.0, 1.0) * 10000.0) / 10000.0;
    Record row{Cell{a}, Cell{std::string(1, static_cast<char>('u' + rng.uniform_int(3)))},
               Cell{b}};
    auto r = parse_generated(serialize_row(row, s, v), s, v);
    ASSERT_TRUE(r.ok());
    EXPECT_DOUBLE_EQ(num((*r.record)[0]), a);
    EXPECT_DOUBLE_EQ(num((*r.record)[2]), b);
    EXPECT_EQ(cat((*r.record)[1]), cat(row[1]));
  }
}

TEST(FormatNumeric, NoExponentAndSixSignificantDigits) {
  EXPECT_EQ(format_numeric(0.0), "0");
  EXPECT_EQ(format_numeric(30.0), "30");
  EXPECT_EQ(format_numeric(3.5), "3.5");
  EXPECT_EQ(format_numeric(-2.0), "-2");
  EXPECT_EQ(format_numeric(1234567.0), "1234570");
  EXPECT_EQ(format_numeric(0.000123456789), "0.000123457");
  for (double v : {1e12, -3.25e-7, 9.999999e5, 123.4564}) {
    const std::string s = format_numeric(v);
    EXPECT_EQ(s.find('e'), std::string::npos) << s;
    double back;
    ASSERT_TRUE(parse_plain_number(s, back)) << s;
    if (v != 0) EXPECT_NEAR(back / v, 1.0, 1e-5) << s;
  }
}

TEST(MakeToy, ShapeAndDeterminism) {
  Table t = make_toy({200, 2, 1, 2}, 1);
  EXPECT_EQ(t.size(), 200u);
  EXPECT_EQ(t.schema.size(), 4u);  // 2 numeric + 1 categorical + label
  EXPECT_EQ(t.schema.columns.back().name, "label");

  const auto p1 = write_temp("toy1.csv", "");
  const auto p2 = write_temp("toy2.csv", "");
  write_csv(make_toy({200, 2, 1, 2}, 1), p1);
  write_csv(make_toy({200, 2, 1, 2}, 1), p2);
  EXPECT_EQ(read_file(p1), read_file(p2));
  EXPECT_NE(read_file(p1), "");
}

TEST(MakeToy, SingleClusterDegenerateMixture) {
  Table t = make_toy({100, 1, 1, 1}, 4);
  // One component: every label lands on the same side.
  for (const auto& row : t.rows) EXPECT_EQ(cat(row.back()), "neg");
}

TEST(MakeToy, CsvRoundTripPreservesTable) {
  Table t = make_toy({50, 2, 1, 2}, 8);
  const auto path = write_temp("toy_rt.csv", "");
  write_csv(t, path);
  Table back = load_csv(path);
  ASSERT_EQ(back.size(), t.size());
  for (size_t i = 0; i < t.size(); ++i)
    for (size_t j = 0; j < t.schema.size(); ++j)
      if (t.schema.columns[j].kind == ColumnKind::numeric)
        EXPECT_DOUBLE_EQ(num(back.rows[i][j]), num(t.rows[i][j]));
      else
        EXPECT_EQ(cat(back.rows[i][j]), cat(t.rows[i][j]));
}

}  // namespace
