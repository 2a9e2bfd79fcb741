#ifndef BIENC_TEST_UTIL_HPP
#define BIENC_TEST_UTIL_HPP

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>

#include "bienc/bienc.hpp"

namespace testutil {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("bienc_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string str() const { return path_.string(); }
  std::string operator/(const std::string& rel) const { return (path_ / rel).string(); }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::string& path, const std::string& text) {
  std::filesystem::create_directories(std::filesystem::path(path).parent_path());
  std::ofstream(path, std::ios::binary) << text;
}

inline std::string read_file(const std::string& path) { return bienc::detail::read_text(path); }

/// Character-level vocabulary (no merges): specials, 26 letters and the end-of-word symbol.
inline bienc::Vocabulary letter_vocab() {
  const std::size_t base = bienc::tokens::special_tokens(bienc::TypeLabelSet{}).size() + 26 + 1;
  return bienc::train_bpe(std::vector<std::string>{"abcdefghijklmnopqrstuvwxyz"}, base);
}

/// Vocabulary trained on the default synthetic corpus.
inline const bienc::Vocabulary& toy_vocab() {
  static const bienc::Vocabulary v = [] {
    const auto sc = bienc::make_synthetic_corpus({});
    std::vector<std::string> texts;
    for (const auto& e : sc.entities) {
      texts.push_back(e.title);
      texts.push_back(e.description);
    }
    return bienc::train_bpe(texts, 600);
  }();
  return v;
}

inline bienc::Matrix random_matrix(bienc::Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  bienc::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

}  // namespace testutil

#endif  // BIENC_TEST_UTIL_HPP
