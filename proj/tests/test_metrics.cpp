#include <doctest.h>

#include "coevolve/metrics.hpp"

using namespace coevolve;

TEST_SUITE("metrics") {

TEST_CASE("accuracy") {
    LabelVector y = {0, 1, 2, 1};
    Mask all(4, 1);
    CHECK(accuracy({0, 1, 2, 1}, y, all) == doctest::Approx(1.0));
    CHECK(accuracy({0, 0, 0, 0}, y, all) == doctest::Approx(0.25));
    Mask partial = {1, 1, 0, 0};
    CHECK(accuracy({0, 0, 9, 9}, y, partial) == doctest::Approx(0.5));
}

TEST_CASE("macro f1 of a perfect predictor is one") {
    LabelVector y = {0, 1, 2, 0, 1, 2};
    Mask all(6, 1);
    CHECK(macro_f1(y, y, all, 3) == doctest::Approx(1.0));
}

TEST_CASE("macro f1 on a hand-built confusion case") {
    // Nodes: labels {0,0,1,1}, predictions {0,1,1,1}.
    // Class 0: tp=1, fp=0, fn=1 -> F1 = 2/3.
    // Class 1: tp=2, fp=1, fn=0 -> F1 = 4/5.
    // Macro = (2/3 + 4/5)/2 = 11/15.
    LabelVector y = {0, 0, 1, 1};
    std::vector<int> pred = {0, 1, 1, 1};
    Mask all(4, 1);
    CHECK(macro_f1(pred, y, all, 2) == doctest::Approx(11.0 / 15.0));
}

TEST_CASE("macro f1 averages only classes present in the mask") {
    LabelVector y = {0, 0, 1, 2};
    std::vector<int> pred = {0, 0, 1, 2};
    Mask m = {1, 1, 1, 0}; // class 2 hidden
    CHECK(macro_f1(pred, y, m, 3) == doctest::Approx(1.0));
}

TEST_CASE("argmax rows picks the first maximal column") {
    Matrix p(2, 3);
    p << 0.2, 0.5, 0.3, 0.4, 0.4, 0.2;
    auto a = argmax_rows(p);
    CHECK(a[0] == 1);
    CHECK(a[1] == 0);
}

} // TEST_SUITE
