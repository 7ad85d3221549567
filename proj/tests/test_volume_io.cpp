#include <doctest.h>

#include <cstring>
#include <fstream>

#include "fixtures.hpp"
#include "glioma/errors.hpp"
#include "glioma/volume_io.hpp"

using namespace glioma;
using namespace glioma::testing;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "glioma_volume_io";
  std::filesystem::create_directories(dir);
  return dir / name;
}

void write_bytes(const std::filesystem::path& p, const std::vector<char>& bytes) {
  std::ofstream os(p, std::ios::binary);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

template <typename T>
void append(std::vector<char>& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

}  // namespace

TEST_CASE("scalar and tensor round trips are bitwise exact") {
  std::mt19937_64 rng(12);
  const Grid g({8, 6, 4}, {0.5, 0.25, 1.0}, {1.0, -2.0, 3.0});
  const ScalarField f(g, random_vector(static_cast<Eigen::Index>(g.size()), rng));
  save_scalar(scratch("s.glf"), f);
  const ScalarField back = load_scalar(scratch("s.glf"));
  CHECK(back.grid() == g);
  CHECK(back.values() == f.values());

  TensorField t(g);
  for (int c = 0; c < 6; ++c) t.values().col(c) = random_vector(t.values().rows(), rng);
  save_tensor(scratch("t.glf"), t);
  const TensorField tb = load_tensor(scratch("t.glf"));
  CHECK(tb.values() == t.values());
  CHECK_THROWS_AS(load_scalar(scratch("t.glf")), IoError);
}

TEST_CASE("corrupt files are rejected") {
  write_bytes(scratch("empty.glf"), {});
  CHECK_THROWS_WITH_AS(load_volume(scratch("empty.glf")), doctest::Contains("bad magic"), IoError);

  const Grid g = Grid::cube(2, 4, 1.0);
  save_scalar(scratch("ok.glf"), ScalarField(g, 1.0));
  const auto size = std::filesystem::file_size(scratch("ok.glf"));
  std::filesystem::resize_file(scratch("ok.glf"), size - 3);
  CHECK_THROWS_WITH_AS(load_volume(scratch("ok.glf")), doctest::Contains("truncated"), IoError);

  std::vector<char> hdr{'G', 'L', 'I', 'O', 'F', '1', '\0', '\0'};
  append<std::uint32_t>(hdr, 3);
  append<std::uint32_t>(hdr, 2048);
  append<std::uint32_t>(hdr, 2048);
  append<std::uint32_t>(hdr, 1024);  // 2^32 voxels
  append<std::uint32_t>(hdr, 1);
  write_bytes(scratch("huge.glf"), hdr);
  CHECK_THROWS_WITH_AS(load_volume(scratch("huge.glf")), doctest::Contains("overflow"), IoError);

  save_scalar(scratch("extra.glf"), ScalarField(g, 1.0));
  {
    std::ofstream os(scratch("extra.glf"), std::ios::binary | std::ios::app);
    os.put('x');
  }
  CHECK_THROWS_AS(load_volume(scratch("extra.glf")), IoError);
  CHECK_THROWS_AS(load_volume(scratch("does_not_exist.glf")), IoError);
}

TEST_CASE("tissue labels survive the scalar encoding") {
  const Grid g = Grid::cube(2, 16, 1.0);
  const Anatomy a = synth_anatomy(g, AnatomySpec::standard(g));
  save_scalar(scratch("tissue.glf"), a.tissue.to_field());
  const TissueMap back = TissueMap::from_field(load_scalar(scratch("tissue.glf")));
  for (std::size_t v = 0; v < g.size(); ++v) CHECK(back[v] == a.tissue[v]);
}
