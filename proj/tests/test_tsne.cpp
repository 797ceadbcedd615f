#include <catch2/catch_amalgamated.hpp>

TEST_CASE("test_tsne placeholder, real tests land with the module") { SUCCEED(); }
