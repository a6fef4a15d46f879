#include "cotlab/tasks.hpp"

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <unistd.h>

using namespace cotlab;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("cotlab_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("modsum generates digit sums modulo m") {
  const Vocab v = builtin_vocab();
  TaskSpec spec;
  spec.kind = TaskKind::ModSum;
  spec.size = 200;
  spec.seed = 7;
  spec.operands = 3;
  spec.modulus = 10;
  const auto examples = gen_modsum(spec, v);
  REQUIRE(examples.size() == 200);
  for (const auto& e : examples) {
    e.validate(v);
    REQUIRE(e.prompt.size() == 5);  // d + d + d
    REQUIRE(e.answer.size() == 1);
    int sum = 0;
    for (size_t i = 0; i < e.prompt.size(); i += 2) {
      const std::string& s = v.symbol(e.prompt[i]);
      REQUIRE(s.size() == 1);
      sum += s[0] - '0';
    }
    CHECK(v.symbol(e.answer[0])[0] - '0' == sum % 10);
    CHECK(v.symbol(e.prompt[1]) == "+");
  }

  // fixed cases from the construction
  CHECK(gen_modsum(spec, v)[0].id == "modsum-0");
  const auto again = gen_modsum(spec, v);
  for (size_t i = 0; i < examples.size(); ++i) {
    CHECK(examples[i].prompt == again[i].prompt);
    CHECK(examples[i].answer == again[i].answer);
  }
}

TEST_CASE("modsum answers are near-uniform over residues") {
  const Vocab v = builtin_vocab();
  TaskSpec spec;
  spec.kind = TaskKind::ModSum;
  spec.size = 10000;
  spec.seed = 11;
  spec.operands = 3;
  spec.modulus = 10;
  const auto examples = gen_modsum(spec, v);
  std::array<double, 10> counts{};
  for (const auto& e : examples) counts[static_cast<size_t>(v.symbol(e.answer[0])[0] - '0')] += 1.0;
  double chi2 = 0.0;
  const double expected = 1000.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // 9 dof; chi2 above ~27.9 would reject at p < 0.001
  CHECK(chi2 < 27.9);
}

TEST_CASE("longtransform reverses and repeats the prompt") {
  const Vocab v = builtin_vocab();
  TaskSpec spec;
  spec.kind = TaskKind::LongTransform;
  spec.size = 100;
  spec.seed = 3;
  spec.multiplier = 4;
  const auto examples = gen_longtransform(spec, v);
  REQUIRE(examples.size() == 100);
  for (const auto& e : examples) {
    e.validate(v);
    CHECK(e.prompt.size() >= 3);
    CHECK(e.prompt.size() <= 8);
    REQUIRE(e.answer.size() == e.prompt.size() * 4);
    for (size_t rep = 0; rep < 4; ++rep) {
      for (size_t i = 0; i < e.prompt.size(); ++i) {
        CHECK(e.answer[rep * e.prompt.size() + i] == e.prompt[e.prompt.size() - 1 - i]);
      }
    }
  }

  TaskSpec two = spec;
  two.multiplier = 2;
  const auto small = gen_longtransform(two, v);
  CHECK(small[0].answer.size() == small[0].prompt.size() * 2);
}

TEST_CASE("jsonl round trip") {
  TempDir tmp;
  const Vocab v = builtin_vocab();
  TaskSpec spec;
  spec.kind = TaskKind::ModSum;
  spec.size = 25;
  spec.seed = 5;
  const auto examples = gen_modsum(spec, v);
  const std::string path = (tmp.path / "d.jsonl").string();
  save_jsonl(path, examples, v);

  const auto loaded = load_jsonl(path, v);
  REQUIRE(loaded.size() == examples.size());
  for (size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].id == examples[i].id);
    CHECK(loaded[i].prompt == examples[i].prompt);
    CHECK(loaded[i].answer == examples[i].answer);
  }
}

TEST_CASE("jsonl loader error paths") {
  TempDir tmp;
  const Vocab v = builtin_vocab();

  CHECK_THROWS_AS((void)load_jsonl((tmp.path / "missing.jsonl").string(), v), IoError);

  const auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream f(tmp.path / name);
    f << content;
    return (tmp.path / name).string();
  };

  CHECK(load_jsonl(write("empty.jsonl", ""), v).empty());

  CHECK_THROWS_AS((void)load_jsonl(write("broken.jsonl", "{not json\n"), v), ParseError);

  const std::string unknown =
      R"({"id":"a","prompt":["3"],"answer":["%"]})" "\n";
  try {
    (void)load_jsonl(write("unknown.jsonl", unknown), v);
    FAIL("expected UnknownTokenError");
  } catch (const UnknownTokenError& e) {
    CHECK(e.line == 1);
    CHECK(e.symbol == "%");
  }

  const std::string dup =
      R"({"id":"a","prompt":["3"],"answer":["4"]})" "\n"
      R"({"id":"a","prompt":["5"],"answer":["6"]})" "\n";
  CHECK_THROWS_AS((void)load_jsonl(write("dup.jsonl", dup), v), DuplicateIdError);
}

TEST_CASE("split is deterministic, disjoint, and exhaustive") {
  const Vocab v = builtin_vocab();
  TaskSpec spec;
  spec.kind = TaskKind::ModSum;
  spec.size = 100;
  spec.seed = 13;
  const auto examples = gen_modsum(spec, v);

  const auto [train, val] = split(examples, 0.1, 41);
  CHECK(train.size() == 90);
  CHECK(val.size() == 10);

  const auto [train2, val2] = split(examples, 0.1, 41);
  for (size_t i = 0; i < train.size(); ++i) CHECK(train[i].id == train2[i].id);
  for (size_t i = 0; i < val.size(); ++i) CHECK(val[i].id == val2[i].id);

  std::multiset<std::string> ids;
  for (const auto& e : train) ids.insert(e.id);
  for (const auto& e : val) ids.insert(e.id);
  std::multiset<std::string> expected;
  for (const auto& e : examples) expected.insert(e.id);
  CHECK(ids == expected);

  CHECK_THROWS_AS((void)split(examples, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS((void)split(examples, 1.0, 1), std::invalid_argument);
}
