#include <stdexcept>
#include <string>

#include "doctest.h"
#include "hgmamba/gradcheck.hpp"

using namespace hgmamba;

TEST_CASE("tiny gradcheck suite passes every component and the model") {
  const std::vector<GradCheckResult> results = run_gradcheck("tiny");
  REQUIRE(!results.empty());
  bool saw_aggregate = false, saw_model = false;
  for (const GradCheckResult& r : results) {
    INFO(r.name, " rel_err ", r.rel_err, " tol ", r.tol);
    CHECK(r.pass);
    CHECK(r.rel_err < r.tol);
    if (r.name.rfind("aggregate.", 0) == 0) saw_aggregate = true;
    if (r.name.rfind("model.", 0) == 0) saw_model = true;
  }
  CHECK(saw_aggregate);
  CHECK(saw_model);
  CHECK(gradcheck_all_pass(results));
}

TEST_CASE("gradcheck rejects unknown size names") {
  CHECK_THROWS_AS(run_gradcheck("huge"), std::invalid_argument);
}
