#include <doctest.h>

#include "amg/errors.hpp"
#include "amg/oracle.hpp"
#include "amg/training.hpp"
#include "helpers.hpp"

using namespace amg;

namespace {

struct AlwaysFlag : QueryDefense {
  bool inspect(const Tensor&) override { return true; }
};

}  // namespace

TEST_CASE("decide and second_choice examples") {
  const std::vector<double> p{0.1, 0.7, 0.2};
  CHECK(decide(p) == 1);
  CHECK(second_choice(p) == 2);
  CHECK(decide(std::vector<double>{0.5, 0.5}) == 0);
  CHECK(second_choice(std::vector<double>{0.5, 0.5}) == 1);
  CHECK(decide(std::vector<double>(10, 0.1)) == 0);
  CHECK(second_choice(std::vector<double>{1.0, 0.0, 0.0}) == 1);
  CHECK_THROWS_AS(second_choice(std::vector<double>{1.0}), InvalidInput);
}

TEST_CASE("psi") {
  CHECK(psi(3, 3) == 1);
  CHECK(psi(2, 3) == -1);
}

TEST_CASE("submit_query: pass-through, misdirection, logging") {
  Network net = testing::constant_probs(4, {0.1, 0.7, 0.2});
  Tensor x({4}, 0.5);
  Oracle plain(net);
  CHECK(plain.submit_query(x) == 1);
  CHECK(plain.submit_query(x, QuerySource::benign) == 1);
  CHECK(plain.log().counter() == 2);
  CHECK(plain.log().count(QuerySource::benign) == 1);
  CHECK(plain.log().entries()[1].step == 1);
  CHECK(plain.log().entries()[0].hash == query_hash(x));

  AlwaysFlag flag;
  Oracle defended(net, &flag);
  CHECK(defended.submit_query(x) == 2);
  CHECK(defended.last_flag());
  CHECK(defended.log().entries()[0].flagged);
  CHECK(defended.clean_decision(x) == 1);
}

TEST_CASE("submit_query is pure without a defense and misdirection never returns the argmax") {
  Rng rng(3);
  Network net = NetworkBuilder({6}).dense(8, Activation::tanh).dense(5).build(rng);
  Oracle plain(net);
  AlwaysFlag flag;
  Oracle defended(net, &flag);
  for (int t = 0; t < 200; ++t) {
    Tensor x({6});
    for (double& v : x.raw()) v = rng.uniform();
    const int a = plain.submit_query(x);
    CHECK(plain.submit_query(x) == a);
    CHECK(a == decide(softmax(net.forward_one(x.raw()))));
    CHECK(defended.submit_query(x) != a);
  }
}

TEST_CASE("query hash quantizes to 8 bits") {
  Tensor a({3}, 0.5);
  Tensor b = a;
  b[0] += 1e-4;
  CHECK(query_hash(a) == query_hash(b));
  b[1] = 0.9;
  CHECK(query_hash(a) != query_hash(b));
}
