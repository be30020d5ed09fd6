#include "vidfocus/matrix_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "vidfocus/error.hpp"

namespace vidfocus {

namespace {

bool next_word(std::string_view text, std::size_t& pos, std::string_view& word) {
  while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  if (pos == text.size()) return false;
  const std::size_t begin = pos;
  while (pos < text.size() && !std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  word = text.substr(begin, pos - begin);
  return true;
}

std::size_t parse_count(std::string_view word, const char* what) {
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(word.data(), word.data() + word.size(), value);
  if (ec != std::errc() || ptr != word.data() + word.size()) {
    throw ParseError(std::string("matrix text: bad ") + what + " '" + std::string(word) + "'");
  }
  return value;
}

}  // namespace

Matrix parse_matrix_text(std::string_view text) {
  std::size_t pos = 0;
  std::string_view word;
  if (!next_word(text, pos, word)) throw ParseError("matrix text: empty input");
  const std::size_t rows = parse_count(word, "row count");
  if (!next_word(text, pos, word)) throw ParseError("matrix text: missing column count");
  const std::size_t cols = parse_count(word, "column count");

  std::vector<double> data;
  data.reserve(rows * cols);
  while (next_word(text, pos, word)) {
    // strtod accepts the usual spellings; from_chars for double is missing
    // from older libstdc++.
    const std::string token(word);
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end != token.c_str() + token.size()) {
      throw ParseError("matrix text: bad number '" + token + "'");
    }
    data.push_back(v);
  }
  if (data.size() != rows * cols) {
    throw ParseError("matrix text: header says " + std::to_string(rows) + "x" +
                     std::to_string(cols) + " but found " + std::to_string(data.size()) +
                     " values");
  }
  return Matrix(rows, cols, std::move(data));
}

std::string format_matrix_text(const Matrix& m) {
  std::string out = std::to_string(m.rows()) + " " + std::to_string(m.cols()) + "\n";
  char buf[32];
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
      if (j > 0) out.push_back(' ');
      out += buf;
    }
    out.push_back('\n');
  }
  return out;
}

Matrix read_matrix_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_matrix_text(buf.str());
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

}  // namespace vidfocus
