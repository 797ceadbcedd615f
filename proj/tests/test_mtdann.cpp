#include <catch2/catch_amalgamated.hpp>

TEST_CASE("test_mtdann placeholder, real tests land with the module") { SUCCEED(); }
