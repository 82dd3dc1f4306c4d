#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>

// Always-on check macros; tests are plain executables that exit nonzero on
// the first failure and print one [PASS] line per test case.

#define REQUIRE(cond)                                                              \
  do {                                                                             \
    if (!(cond)) {                                                                 \
      std::fprintf(stderr, "[FAIL] %s:%d: %s\n", __FILE__, __LINE__, #cond);       \
      std::exit(1);                                                                \
    }                                                                              \
  } while (0)

#define REQUIRE_MSG(cond, ...)                                                     \
  do {                                                                             \
    if (!(cond)) {                                                                 \
      std::fprintf(stderr, "[FAIL] %s:%d: %s\n  ", __FILE__, __LINE__, #cond);     \
      std::fprintf(stderr, __VA_ARGS__);                                           \
      std::fprintf(stderr, "\n");                                                  \
      std::exit(1);                                                                \
    }                                                                              \
  } while (0)

#define REQUIRE_NEAR(a, b, tol)                                                    \
  do {                                                                             \
    const double va = static_cast<double>(a), vb = static_cast<double>(b);         \
    if (!(std::abs(va - vb) <= (tol))) {                                           \
      std::fprintf(stderr, "[FAIL] %s:%d: |%s - %s| = |%.12g - %.12g| > %g\n",     \
                   __FILE__, __LINE__, #a, #b, va, vb, static_cast<double>(tol));  \
      std::exit(1);                                                                \
    }                                                                              \
  } while (0)

#define REQUIRE_THROWS_KIND(expr, kind_)                                           \
  do {                                                                             \
    bool caught = false;                                                           \
    try {                                                                          \
      (void)(expr);                                                                \
    } catch (const mud::Error& e) {                                                \
      caught = (e.kind() == (kind_));                                              \
    }                                                                              \
    REQUIRE_MSG(caught, "expected error kind from %s", #expr);                     \
  } while (0)

inline void pass(const std::string& name) { std::printf("[PASS] %s\n", name.c_str()); }
