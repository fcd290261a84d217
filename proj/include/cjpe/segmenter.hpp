#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cjpe/error.hpp"

namespace cjpe {

/// Half-open [begin, end) range, either of bytes or of token indices.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool empty() const { return end == begin; }
  bool contains(std::size_t i) const { return i >= begin && i < end; }
  friend bool operator==(const Span&, const Span&) = default;
};

struct Token {
  std::string text;
  Span char_span;
};

struct Sentence {
  Span char_span;
  Span token_span;
};

struct Chunk {
  std::size_t index = 0;
  Span token_span;
  Span char_span;
  std::string text;
};

struct ChunkConfig {
  std::size_t chunk_size = 512;
  std::size_t overlap = 100;
  std::size_t tail_tokens = 512;
  std::size_t tail_sentences = 150;

  std::size_t stride() const { return chunk_size - overlap; }

  void validate() const {
    if (chunk_size == 0 || overlap >= chunk_size)
      throw Error(ErrorCode::InvalidArgument, "chunk config requires 0 <= overlap < chunk_size");
    if (tail_tokens == 0) throw Error(ErrorCode::InvalidArgument, "tail_tokens must be >= 1");
  }
};

namespace detail {

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// ASCII punctuation only; bytes of multi-byte UTF-8 sequences count as word
// characters.
inline bool is_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return (u >= 33 && u <= 47) || (u >= 58 && u <= 64) || (u >= 91 && u <= 96) ||
         (u >= 123 && u <= 126);
}

inline bool is_upper_or_digit(char c) { return (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9'); }

inline bool is_terminator(std::string_view t) { return t == "." || t == "?" || t == "!"; }

inline bool is_closer(std::string_view t) {
  return t == "\"" || t == "'" || t == ")" || t == "]";
}

}  // namespace detail

inline const std::vector<std::string>& default_abbreviations() {
  static const std::vector<std::string> list = {"No.", "vs.", "v.", "Sec.", "Art.", "Hon.", "Rs."};
  return list;
}

/// Splits on whitespace, then peels leading and trailing ASCII punctuation
/// off each word, one character per token. Offsets are byte offsets.
inline std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  const std::size_t n = text.size();
  auto emit = [&](std::size_t b, std::size_t e) {
    tokens.push_back(Token{std::string(text.substr(b, e - b)), Span{b, e}});
  };
  while (i < n) {
    while (i < n && detail::is_space(text[i])) ++i;
    if (i >= n) break;
    std::size_t word_end = i;
    while (word_end < n && !detail::is_space(text[word_end])) ++word_end;

    std::size_t b = i;
    std::size_t e = word_end;
    while (b < e && detail::is_punct(text[b])) {
      emit(b, b + 1);
      ++b;
    }
    std::size_t core_end = e;
    while (core_end > b && detail::is_punct(text[core_end - 1])) --core_end;
    if (core_end > b) emit(b, core_end);
    for (std::size_t p = core_end; p < e; ++p) emit(p, p + 1);
    i = word_end;
  }
  return tokens;
}

/// Rule-based splitter. A sentence ends after '.', '?' or '!' (plus any
/// adjacent closing quotes/brackets) when whitespace and an uppercase letter
/// or digit follow, unless the period closes a listed abbreviation.
inline std::vector<Sentence> split_sentences(
    std::string_view text, std::span<const Token> tokens,
    const std::vector<std::string>& abbreviations = default_abbreviations()) {
  (void)text;
  std::vector<Sentence> sentences;
  const std::size_t n = tokens.size();
  std::size_t start = 0;
  auto close = [&](std::size_t end_tok) {
    sentences.push_back(Sentence{Span{tokens[start].char_span.begin, tokens[end_tok - 1].char_span.end},
                                 Span{start, end_tok}});
    start = end_tok;
  };
  for (std::size_t i = 0; i < n; ++i) {
    if (!detail::is_terminator(tokens[i].text)) continue;
    if (tokens[i].text == "." && i > 0 && tokens[i - 1].char_span.end == tokens[i].char_span.begin) {
      const std::string candidate = tokens[i - 1].text + ".";
      if (std::find(abbreviations.begin(), abbreviations.end(), candidate) != abbreviations.end())
        continue;
    }
    std::size_t last = i;
    while (last + 1 < n && tokens[last + 1].char_span.begin == tokens[last].char_span.end &&
           (detail::is_terminator(tokens[last + 1].text) || detail::is_closer(tokens[last + 1].text)))
      ++last;
    if (last + 1 >= n) break;
    const Token& next = tokens[last + 1];
    if (next.char_span.begin == tokens[last].char_span.end) continue;
    if (!detail::is_upper_or_digit(next.text.front())) continue;
    close(last + 1);
    i = last;
  }
  if (start < n) close(n);
  return sentences;
}

/// The last min(n, size) tokens.
inline std::span<const Token> tail(std::span<const Token> tokens, std::size_t n) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "tail length must be >= 1");
  const std::size_t keep = std::min(n, tokens.size());
  return tokens.subspan(tokens.size() - keep);
}

/// Token windows of the sliding-window chunker without materialised text.
/// Window i starts at i * stride; a trailing window whose length does not
/// exceed the overlap lies inside its predecessor and is dropped.
inline std::vector<Span> chunk_spans(std::size_t num_tokens, const ChunkConfig& cfg) {
  cfg.validate();
  std::vector<Span> spans;
  for (std::size_t start = 0; start < num_tokens; start += cfg.stride()) {
    const std::size_t end = std::min(start + cfg.chunk_size, num_tokens);
    if (start > 0 && end - start <= cfg.overlap) break;
    spans.push_back(Span{start, end});
    if (end == num_tokens) break;
  }
  return spans;
}

inline std::vector<Chunk> chunk(std::string_view text, std::span<const Token> tokens,
                                const ChunkConfig& cfg) {
  std::vector<Chunk> chunks;
  for (const Span& s : chunk_spans(tokens.size(), cfg)) {
    Chunk c;
    c.index = chunks.size();
    c.token_span = s;
    c.char_span = Span{tokens[s.begin].char_span.begin, tokens[s.end - 1].char_span.end};
    c.text = std::string(text.substr(c.char_span.begin, c.char_span.size()));
    chunks.push_back(std::move(c));
  }
  return chunks;
}

inline std::vector<Chunk> chunk(std::string_view text, const ChunkConfig& cfg) {
  const auto tokens = tokenize(text);
  return chunk(text, tokens, cfg);
}

}  // namespace cjpe
