#include "idapbc/selftest.hpp"

#include <gtest/gtest.h>

namespace idapbc {
namespace {

GTEST_TEST(Selftest, AllSuitesPass) {
  for (const auto& r : run_selftest({})) EXPECT_TRUE(r.pass) << r.name << ": " << r.detail;
}

GTEST_TEST(Selftest, SeedIsReproducible) {
  SelftestOptions a;
  a.seed = 42;
  const auto first = run_selftest(a);
  const auto second = run_selftest(a);
  ASSERT_EQ(first.size(), second.size());
  for (std::size_t i = 0; i < first.size(); ++i) EXPECT_EQ(first[i].max_error, second[i].max_error);
}

GTEST_TEST(Selftest, DimsMax) {
  SelftestOptions o;
  o.dims_max = 3;
  EXPECT_NE(dims_suite(o).detail.find("2..3"), std::string::npos);
  o.dims_max = 7;
  EXPECT_TRUE(dims_suite(o).pass);
}

}  // namespace
}  // namespace idapbc
