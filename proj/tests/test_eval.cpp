#include <catch2/catch_amalgamated.hpp>

TEST_CASE("test_eval placeholder, real tests land with the module") { SUCCEED(); }
