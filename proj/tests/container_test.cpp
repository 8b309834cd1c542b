#include <gtest/gtest.h>

#include "moelm/container.hpp"
#include "moelm/error.hpp"
#include "moelm/numerics.hpp"
#include "test_util.hpp"

namespace moelm {
namespace {

Container sample() {
  Container c;
  c.meta["kind"] = "test";
  c.lists["words"] = {"a", "b", "<UNK>"};
  Matrix m(2, 2);
  m(0, 1) = -0.125;
  m(1, 0) = 1e-300;
  Vector v{3.5, -0.0};
  c.put(view_of("m", m));
  c.put(view_of("v", v));
  return c;
}

TEST(Container, BytesRoundTrip) {
  const auto c = sample();
  const auto bytes = c.to_bytes();
  const auto d = Container::from_bytes(bytes);
  EXPECT_EQ(d.meta, c.meta);
  EXPECT_EQ(d.lists, c.lists);
  EXPECT_EQ(d.to_bytes(), bytes);
  Matrix m(2, 2);
  d.get(view_of("m", m));
  EXPECT_EQ(m(0, 1), -0.125);
  EXPECT_EQ(m(1, 0), 1e-300);
}

TEST(Container, SerializationIsDeterministic) {
  EXPECT_EQ(sample().to_bytes(), sample().to_bytes());
}

TEST(Container, ShapeMismatchAndMissingThrow) {
  const auto c = sample();
  Matrix wrong(1, 4);
  EXPECT_THROW(c.get(view_of("m", wrong)), Error);
  Vector missing(2);
  EXPECT_THROW(c.get(view_of("nope", missing)), Error);
  EXPECT_THROW(c.meta_at("absent"), Error);
}

TEST(Container, RejectsBadMagicAndTruncation) {
  auto bytes = sample().to_bytes();
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(Container::from_bytes(bad), Error);
  EXPECT_THROW(Container::from_bytes(bytes.substr(0, bytes.size() - 3)), Error);
  EXPECT_THROW(Container::from_bytes(""), Error);
}

TEST(Container, FileRoundTripAndHash) {
  testing::TempDir dir;
  const auto path = dir / "nested/ckpt.bin";
  sample().save(path);
  EXPECT_EQ(Container::load(path).to_bytes(), sample().to_bytes());
  EXPECT_EQ(file_sha256(path), sha256_hex(sample().to_bytes()));
  EXPECT_THROW(Container::load(dir / "missing.bin"), Error);
}

TEST(Sha256, KnownVectors) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

}  // namespace
}  // namespace moelm
