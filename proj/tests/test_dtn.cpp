#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

// Placeholder while the module is under construction; replaced by the real
// suite as each layer lands.
TEST_CASE("pending: dtn suite") { CHECK(true); }
