// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <stdexcept>

#include "sde/metrics.hpp"

using namespace sde;

TEST_CASE("boxed extraction takes the last balanced box") {
  auto a = extract_answer("the result is \\boxed{42} obviously", AnswerFormat::boxed);
  REQUIRE(a.has_value());
  CHECK(a->raw == "42");

  a = extract_answer("\\boxed{first} and \\boxed{7x+\\frac{1}{2}}", AnswerFormat::boxed);
  REQUIRE(a.has_value());
  CHECK(a->raw == "7x+\\frac{1}{2}");

  a = extract_answer("\\boxed{kept} then \\boxed{never closes", AnswerFormat::boxed);
  REQUIRE(a.has_value());
  CHECK(a->raw == "kept");

  CHECK_FALSE(extract_answer("no box here", AnswerFormat::boxed).has_value());
  CHECK_FALSE(extract_answer("\\boxed{unbalanced", AnswerFormat::boxed).has_value());
}

TEST_CASE("choice extraction takes the last (X)") {
  auto a = extract_answer("maybe (A)... no, final answer (C)", AnswerFormat::choice);
  REQUIRE(a.has_value());
  CHECK(a->raw == "C");
  CHECK_FALSE(extract_answer("lowercase (c) only", AnswerFormat::choice).has_value());
  CHECK_FALSE(extract_answer("(AB) is not a single letter", AnswerFormat::choice).has_value());
  CHECK_FALSE(extract_answer("nothing", AnswerFormat::choice).has_value());
}

TEST_CASE("finish extraction takes the last Finish[...]") {
  auto a = extract_answer("Finish[draft] ... Finish[final answer]", AnswerFormat::finish);
  REQUIRE(a.has_value());
  CHECK(a->raw == "final answer");
  CHECK_FALSE(extract_answer("Finish[never closes", AnswerFormat::finish).has_value());
}

TEST_CASE("normalization lowercases, strips punctuation and articles") {
  CHECK(normalize_answer("The U.S. Answer!") == "us answer");
  CHECK(normalize_answer("A  Big   DOG") == "big dog");
  CHECK(normalize_answer("an apple a day") == "apple day");
  CHECK(normalize_answer("1,800 to 7,000 ft") == "1800 to 7000 ft");
  CHECK(normalize_answer("") == "");
  // Idempotent.
  for (const char* s : {"Mixed CASE, with. punctuation!", "the the the", "  spaces  "}) {
    const std::string once = normalize_answer(s);
    CHECK(normalize_answer(once) == once);
  }
}

TEST_CASE("exact match and token F1 behave like the standard QA metrics") {
  // Partial overlap: one shared token out of two on each side.
  CHECK(exact_match("hawkins indiana", {"bloomington indiana"}) == 0.0);
  CHECK(token_f1("hawkins indiana", {"bloomington indiana"}) == doctest::Approx(0.5));

  // Multiset counting: "a a b" vs "a b b" overlaps twice.
  CHECK(token_f1("a a b", {"a b b"}) == doctest::Approx(2.0 / 3.0));

  // Max over golds.
  CHECK(exact_match("paris", {"london", "paris"}) == 1.0);
  CHECK(token_f1("paris france", {"london", "paris"}) == doctest::Approx(2.0 / 3.0));

  // Empty handling.
  CHECK(token_f1("", {"x"}) == 0.0);
  CHECK(token_f1("x", {""}) == 0.0);
  CHECK(token_f1("", {""}) == 1.0);
  CHECK(exact_match("", {""}) == 1.0);
}

TEST_CASE("exact match implies perfect F1") {
  const std::vector<std::string> fixtures = {"short", "two words", "a the an", "",
                                             "numbers 123 456"};
  for (const std::string& s : fixtures) {
    const std::string n = normalize_answer(s);
    if (exact_match(n, {n}) == 1.0) {
      CHECK(token_f1(n, {n}) == 1.0);
    }
  }
}

TEST_CASE("format selection follows setting and kind") {
  CHECK(format_for(Setting::workflow, QuestionKind::freeform) == AnswerFormat::finish);
  CHECK(format_for(Setting::workflow, QuestionKind::label) == AnswerFormat::finish);
  CHECK(format_for(Setting::debate, QuestionKind::choice) == AnswerFormat::choice);
  CHECK(format_for(Setting::debate, QuestionKind::freeform) == AnswerFormat::boxed);
  CHECK(format_for(Setting::ia, QuestionKind::freeform) == AnswerFormat::boxed);
  CHECK(format_for(Setting::workflow_single, QuestionKind::freeform) == AnswerFormat::boxed);
}

TEST_CASE("score_question handles each kind") {
  SUBCASE("freeform em/f1") {
    QuestionRecord q{"q1", "where", {"Bloomington Indiana"}, QuestionKind::freeform};
    const QuestionScore s =
        score_question(q, Setting::ia, {"I think \\boxed{hawkins indiana}",
                                        "surely \\boxed{Bloomington, Indiana}"});
    REQUIRE(s.response_em.size() == 2);
    CHECK(s.response_em[0] == 0.0);
    CHECK(s.response_f1[0] == doctest::Approx(0.5));
    CHECK(s.response_em[1] == 1.0);
    CHECK(s.response_f1[1] == 1.0);
    CHECK(s.em == doctest::Approx(0.5));
    CHECK(s.f1 == doctest::Approx(0.75));
  }
  SUBCASE("yesno accuracy") {
    QuestionRecord q{"q2", "same?", {"yes"}, QuestionKind::yesno};
    const QuestionScore s = score_question(q, Setting::ia, {"\\boxed{Yes.}", "\\boxed{no}"});
    CHECK(s.response_em[0] == 1.0);
    CHECK(s.response_f1[0] == 1.0);
    CHECK(s.response_em[1] == 0.0);
  }
  SUBCASE("choice accuracy") {
    QuestionRecord q{"q3", "pick", {"B"}, QuestionKind::choice};
    const QuestionScore s = score_question(q, Setting::debate, {"answer (B)", "answer (A)"});
    CHECK(s.response_em[0] == 1.0);
    CHECK(s.response_em[1] == 0.0);
  }
  SUBCASE("label accuracy through the finish format") {
    QuestionRecord q{"q4", "claim", {"NOT ENOUGH INFO"}, QuestionKind::label};
    const QuestionScore s =
        score_question(q, Setting::workflow, {"Action 3: Finish[not enough info]"});
    CHECK(s.response_em[0] == 1.0);
  }
  SUBCASE("unformatted responses score zero and are flagged") {
    QuestionRecord q{"q5", "w", {"x"}, QuestionKind::freeform};
    const QuestionScore s = score_question(q, Setting::ia, {"I ran out of budget"});
    CHECK(s.response_em[0] == 0.0);
    CHECK_FALSE(s.response_formatted[0]);
    CHECK(s.em == 0.0);
  }
}

namespace {

QuestionScore make_score(const std::string& id, std::vector<double> em,
                         std::vector<double> f1) {
  QuestionScore s;
  s.question_id = id;
  s.response_em = em;
  s.response_f1 = f1;
  s.response_formatted.assign(em.size(), true);
  double es = 0.0, fs = 0.0;
  for (std::size_t i = 0; i < em.size(); ++i) {
    es += em[i];
    fs += f1[i];
  }
  s.em = es / static_cast<double>(em.size());
  s.f1 = fs / static_cast<double>(f1.size());
  return s;
}

}  // namespace

TEST_CASE("aggregate averages per run, then across runs") {
  const std::vector<QuestionScore> run1 = {make_score("q1", {1.0}, {1.0}),
                                           make_score("q2", {0.0}, {0.5})};
  const std::vector<QuestionScore> run2 = {make_score("q2", {1.0}, {1.0}),
                                           make_score("q1", {0.0}, {0.0})};
  const Summary s = aggregate({run1, run2});
  CHECK(s.n_runs == 2);
  CHECK(s.n_questions == 2);
  CHECK(s.em == doctest::Approx(0.5));
  CHECK(s.f1 == doctest::Approx((0.75 + 0.5) / 2.0));
  CHECK(s.formatted_rate == 1.0);
}

TEST_CASE("aggregate validates question coverage") {
  const std::vector<QuestionScore> run1 = {make_score("q1", {1.0}, {1.0})};
  const std::vector<QuestionScore> run2 = {make_score("q2", {1.0}, {1.0})};
  CHECK_THROWS_AS(aggregate({run1, run2}), std::invalid_argument);
  CHECK_THROWS_AS(aggregate({}), std::invalid_argument);
  const std::vector<QuestionScore> dup = {make_score("q1", {1.0}, {1.0}),
                                          make_score("q1", {0.0}, {0.0})};
  CHECK_THROWS_AS(aggregate({dup}), std::invalid_argument);
}

TEST_CASE("standalone-shard aggregation credits the better agent's totals") {
  // Agent 0 answers q1 only; agent 1 answers nothing.  The reported score
  // is agent 0's total (0.5), not the response mean (0.25).
  const std::vector<QuestionScore> run = {make_score("q1", {1.0, 0.0}, {1.0, 0.0}),
                                          make_score("q2", {0.0, 0.0}, {0.0, 0.0})};
  const Summary s = aggregate({run}, Setting::ia_single);
  CHECK(s.em == doctest::Approx(0.5));
  CHECK(s.f1 == doctest::Approx(0.5));

  // The mean rule would have given 0.25.
  const Summary mean = aggregate({run}, Setting::ia);
  CHECK(mean.em == doctest::Approx(0.25));
}
