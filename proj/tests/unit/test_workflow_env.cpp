// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "sde/workflow_env.hpp"

using namespace sde;

namespace {

RetrievalIndex demo_index() {
  std::vector<Document> docs = {
      {"d1", "Colorado",
       "Colorado is a state. The eastern sector extends into the plains.\n\nSecond paragraph "
       "about geography."},
      {"d2", "Colorado River", "The Colorado River flows south. It carved canyons."},
      {"d3", "High Plains", "The High Plains rise in elevation. Plains stretch far."},
  };
  return RetrievalIndex::build(std::move(docs));
}

}  // namespace

TEST_CASE("parse_action recognizes the three verbs") {
  auto p = parse_action("Thought 1: I should look this up.\nAction 1: Search[Colorado]");
  REQUIRE(p.action.has_value());
  CHECK(std::get<SearchAction>(*p.action).entity == "Colorado");

  p = parse_action("Action 2: Lookup[eastern sector]");
  REQUIRE(p.action.has_value());
  CHECK(std::get<LookupAction>(*p.action).keyword == "eastern sector");

  p = parse_action("Action 3: Finish[1,800 to 7,000 ft]");
  REQUIRE(p.action.has_value());
  CHECK(std::get<FinishAction>(*p.action).answer == "1,800 to 7,000 ft");
}

TEST_CASE("parse_action picks the last well-formed action") {
  const auto p = parse_action("Search[first] then maybe Lookup[second] or Finish[third]");
  REQUIRE(p.action.has_value());
  CHECK(std::get<FinishAction>(*p.action).answer == "third");
}

TEST_CASE("parse_action is total over junk") {
  SUBCASE("no action at all") {
    const auto p = parse_action("I am not sure what to do next.");
    CHECK_FALSE(p.action.has_value());
    CHECK_FALSE(p.failure.empty());
  }
  SUBCASE("unclosed bracket") {
    const auto p = parse_action("Action 1: Search[Colorado");
    CHECK_FALSE(p.action.has_value());
    CHECK(p.failure.find("close") != std::string::npos);
  }
  SUBCASE("a complete action followed by an unclosed one keeps the complete one") {
    const auto p = parse_action("Finish[done] and then Search[oops");
    REQUIRE(p.action.has_value());
    CHECK(std::holds_alternative<FinishAction>(*p.action));
  }
  SUBCASE("the argument runs to the first closing bracket") {
    const auto p = parse_action("Search[contains Lookup[inner]");
    REQUIRE(p.action.has_value());
    CHECK(std::get<SearchAction>(*p.action).entity == "contains Lookup[inner");
  }
  SUBCASE("a bare verb without bracket is ignored") {
    const auto p = parse_action("I will Search for it later.");
    CHECK_FALSE(p.action.has_value());
  }
  SUBCASE("empty text") {
    CHECK_FALSE(parse_action("").action.has_value());
  }
  SUBCASE("empty argument is allowed") {
    const auto p = parse_action("Search[]");
    REQUIRE(p.action.has_value());
    CHECK(std::get<SearchAction>(*p.action).entity.empty());
  }
}

TEST_CASE("search returns the first paragraph on an exact title hit") {
  const RetrievalIndex index = demo_index();
  EnvState state;
  const std::string obs = env_step(state, index, SearchAction{"colorado"});
  CHECK(obs == "Colorado is a state. The eastern sector extends into the plains.");
  CHECK(state.current_doc == 0);
}

TEST_CASE("search miss lists similar titles") {
  const RetrievalIndex index = demo_index();
  EnvState state;
  const std::string obs = env_step(state, index, SearchAction{"Colorado orogeny"});
  CHECK(obs.find("Could not find Colorado orogeny.") == 0);
  CHECK(obs.find("Similar: [") != std::string::npos);
  CHECK(obs.find("'Colorado'") != std::string::npos);
  CHECK_FALSE(state.current_doc.has_value());
}

TEST_CASE("lookup walks matching sentences with a per-keyword cursor") {
  const RetrievalIndex index = demo_index();
  EnvState state;
  env_step(state, index, SearchAction{"High Plains"});
  REQUIRE(state.current_doc == 2);

  CHECK(env_step(state, index, LookupAction{"plains"}) ==
        "(Result 1 / 2) The High Plains rise in elevation.");
  CHECK(env_step(state, index, LookupAction{"plains"}) ==
        "(Result 2 / 2) Plains stretch far.");
  CHECK(env_step(state, index, LookupAction{"plains"}) == "No more results.");
  // A different keyword has its own cursor.
  CHECK(env_step(state, index, LookupAction{"elevation"}) ==
        "(Result 1 / 1) The High Plains rise in elevation.");
}

TEST_CASE("search resets lookup cursors") {
  const RetrievalIndex index = demo_index();
  EnvState state;
  env_step(state, index, SearchAction{"High Plains"});
  env_step(state, index, LookupAction{"plains"});
  env_step(state, index, SearchAction{"High Plains"});
  CHECK(env_step(state, index, LookupAction{"plains"}) ==
        "(Result 1 / 2) The High Plains rise in elevation.");
}

TEST_CASE("lookup before any search is an error observation, not a crash") {
  const RetrievalIndex index = demo_index();
  EnvState state;
  const std::string obs = env_step(state, index, LookupAction{"plains"});
  CHECK(obs.find("Search") != std::string::npos);
  CHECK_FALSE(state.finished);
}

TEST_CASE("lookup with no matches reports no results") {
  const RetrievalIndex index = demo_index();
  EnvState state;
  env_step(state, index, SearchAction{"Colorado"});
  CHECK(env_step(state, index, LookupAction{"zebra"}) == "No more results.");
}

TEST_CASE("finish records the answer and flags completion") {
  const RetrievalIndex index = demo_index();
  EnvState state;
  const std::string obs = env_step(state, index, FinishAction{"the plains"});
  CHECK(state.finished);
  CHECK(state.final_answer == "the plains");
  CHECK(obs == "Finished.");
}

TEST_CASE("env_step is deterministic given equal state and action") {
  const RetrievalIndex index = demo_index();
  EnvState a;
  EnvState b;
  env_step(a, index, SearchAction{"Colorado"});
  env_step(b, index, SearchAction{"Colorado"});
  CHECK(env_step(a, index, LookupAction{"eastern"}) ==
        env_step(b, index, LookupAction{"eastern"}));
}
