#include <gtest/gtest.h>

#include <string>
#include <vector>

#include "cjpe/rng.hpp"
#include "cjpe/segmenter.hpp"
#include "cjpe/synthetic.hpp"

using namespace cjpe;

namespace {

std::vector<std::string> texts(const std::vector<Token>& tokens) {
  std::vector<std::string> out;
  for (const auto& t : tokens) out.push_back(t.text);
  return out;
}

std::vector<Token> fake_tokens(std::size_t n) {
  std::vector<Token> tokens(n);
  for (std::size_t i = 0; i < n; ++i) tokens[i] = Token{"w", Span{2 * i, 2 * i + 1}};
  return tokens;
}

// Independent enumeration: every window start i*stride below len, keeping a
// window unless it is contained in the window before it.
std::vector<Span> brute_force_windows(std::size_t len, std::size_t size, std::size_t overlap) {
  std::vector<Span> all;
  const std::size_t stride = size - overlap;
  for (std::size_t s = 0; s < len; s += stride) all.push_back(Span{s, std::min(s + size, len)});
  std::vector<Span> kept;
  for (const auto& w : all) {
    if (!kept.empty() && w.end <= kept.back().end) continue;
    kept.push_back(w);
  }
  return kept;
}

std::size_t count_formula(std::size_t len, std::size_t size, std::size_t overlap) {
  if (len == 0) return 0;
  if (len <= size) return 1;
  const std::size_t stride = size - overlap;
  std::size_t n = 1 + (len - size + stride - 1) / stride;
  const std::size_t last_start = (n - 1) * stride;
  if (len - last_start <= overlap) --n;
  return n;
}

}  // namespace

TEST(Tokenize, SplitsTrailingPunctuation) {
  EXPECT_EQ(texts(tokenize("The appeal fails.")), (std::vector<std::string>{"The", "appeal", "fails", "."}));
}

TEST(Tokenize, EmptyText) { EXPECT_TRUE(tokenize("").empty()); }

TEST(Tokenize, LeadingPunctuationAndInternalCharacters) {
  EXPECT_EQ(texts(tokenize("(see 1962_47, don't)")),
            (std::vector<std::string>{"(", "see", "1962_47", ",", "don't", ")"}));
  EXPECT_EQ(texts(tokenize("...")), (std::vector<std::string>{".", ".", "."}));
}

TEST(Tokenize, SpansReproduceText) {
  Rng rng(3);
  synthetic::Options opt;
  opt.num_docs = 1000;
  opt.min_tokens = 20;
  opt.max_tokens = 200;
  for (const auto& c : synthetic::generate(opt)) {
    const auto& text = c.raw.raw_text;
    const auto tokens = tokenize(text);
    std::string rebuilt;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      ASSERT_EQ(text.substr(tokens[i].char_span.begin, tokens[i].char_span.size()), tokens[i].text);
      if (i > 0) {
        ASSERT_GE(tokens[i].char_span.begin, tokens[i - 1].char_span.end);
      }
      rebuilt += text.substr(pos, tokens[i].char_span.begin - pos);  // whitespace between tokens
      rebuilt += tokens[i].text;
      pos = tokens[i].char_span.end;
    }
    rebuilt += text.substr(pos);
    ASSERT_EQ(rebuilt, text);
  }
}

TEST(SplitSentences, TwoTerminalPeriods) {
  const std::string text = "It fails. We dismiss.";
  const auto tokens = tokenize(text);
  const auto s = split_sentences(text, tokens);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(text.substr(s[0].char_span.begin, s[0].char_span.size()), "It fails.");
  EXPECT_EQ(text.substr(s[1].char_span.begin, s[1].char_span.size()), "We dismiss.");
}

TEST(SplitSentences, AbbreviationDoesNotSplit) {
  const std::string text = "See No. 4 of the Act.";
  const auto tokens = tokenize(text);
  EXPECT_EQ(split_sentences(text, tokens).size(), 1u);
}

TEST(SplitSentences, LowercaseContinuationDoesNotSplit) {
  const std::string text = "It fails. and so on.";
  const auto tokens = tokenize(text);
  EXPECT_EQ(split_sentences(text, tokens).size(), 1u);
}

TEST(SplitSentences, ClosingQuoteStaysWithSentence) {
  const std::string text = "He said \"it fails.\" Then he left!";
  const auto tokens = tokenize(text);
  const auto s = split_sentences(text, tokens);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(text.substr(s[0].char_span.begin, s[0].char_span.size()), "He said \"it fails.\"");
}

// Generator knows every boundary it wrote; the splitter must find all.
TEST(SplitSentences, RecallOnGeneratedDocuments) {
  Rng rng(11);
  std::size_t expected = 0, found = 0;
  for (int doc = 0; doc < 200; ++doc) {
    std::string text;
    std::vector<std::size_t> boundaries;  // byte offset where each sentence starts
    const std::size_t n = 3 + rng.below(20);
    for (std::size_t i = 0; i < n; ++i) {
      if (i) text += rng.bernoulli(0.3) ? "\n" : " ";
      boundaries.push_back(text.size());
      text += synthetic::filler_sentence(rng, 4 + rng.below(10));
    }
    const auto tokens = tokenize(text);
    const auto sentences = split_sentences(text, tokens);
    expected += boundaries.size();
    for (auto b : boundaries)
      for (const auto& s : sentences)
        if (s.char_span.begin == b) ++found;
    // Tiling.
    std::size_t next = 0;
    for (const auto& s : sentences) {
      ASSERT_EQ(s.token_span.begin, next);
      next = s.token_span.end;
    }
    ASSERT_EQ(next, tokens.size());
  }
  EXPECT_EQ(found, expected);
}

TEST(Tail, SliceArithmetic) {
  const auto tokens = fake_tokens(1000);
  const auto t = tail(tokens, 512);
  ASSERT_EQ(t.size(), 512u);
  EXPECT_EQ(&t.front(), &tokens[488]);
  EXPECT_EQ(tail(fake_tokens(300), 512).size(), 300u);
  const auto tt = tail(t, 512);
  EXPECT_EQ(tt.data(), t.data());
  EXPECT_EQ(tt.size(), t.size());
  EXPECT_THROW(tail(tokens, 0), Error);
}

TEST(Chunk, StrideArithmetic) {
  ChunkConfig cfg;
  auto spans = chunk_spans(1024, cfg);
  ASSERT_EQ(spans.size(), 3u);
  EXPECT_EQ(spans[0], (Span{0, 512}));
  EXPECT_EQ(spans[1], (Span{412, 924}));
  EXPECT_EQ(spans[2], (Span{824, 1024}));
  EXPECT_EQ(spans[2].size(), 200u);

  EXPECT_EQ(chunk_spans(512, cfg).size(), 1u);
  spans = chunk_spans(600, cfg);
  ASSERT_EQ(spans.size(), 2u);
  EXPECT_EQ(spans[0], (Span{0, 512}));
  EXPECT_EQ(spans[1], (Span{412, 600}));
  EXPECT_TRUE(chunk_spans(0, cfg).empty());
}

TEST(Chunk, RejectsInvalidConfig) {
  ChunkConfig cfg;
  cfg.overlap = cfg.chunk_size;
  EXPECT_THROW(chunk_spans(10, cfg), Error);
}

TEST(Chunk, MatchesBruteForceAndFormula) {
  Rng rng(5);
  std::vector<std::pair<std::size_t, std::size_t>> configs = {{512, 100}};
  for (int i = 0; i < 30; ++i) {
    const std::size_t size = 1 + rng.below(300);
    configs.emplace_back(size, rng.below(size));
  }
  for (auto [size, overlap] : configs) {
    ChunkConfig cfg;
    cfg.chunk_size = size;
    cfg.overlap = overlap;
    for (std::size_t len = 1; len <= 1500; ++len) {
      const auto spans = chunk_spans(len, cfg);
      ASSERT_EQ(spans, brute_force_windows(len, size, overlap)) << size << "/" << overlap << " len " << len;
      ASSERT_EQ(spans.size(), count_formula(len, size, overlap));
      // Reconstruction: drop the overlap prefix of every later chunk.
      std::size_t covered = 0;
      for (std::size_t i = 0; i < spans.size(); ++i) {
        const std::size_t from = i == 0 ? spans[i].begin : spans[i].begin + overlap;
        ASSERT_EQ(from, covered);
        ASSERT_LE(spans[i].size(), size);
        covered = spans[i].end;
      }
      ASSERT_EQ(covered, len);
    }
  }
}

TEST(Chunk, CarriesTextAndOffsets) {
  std::string text;
  for (int i = 0; i < 30; ++i) text += "w" + std::to_string(i) + " ";
  ChunkConfig cfg;
  cfg.chunk_size = 10;
  cfg.overlap = 3;
  const auto chunks = chunk(text, cfg);
  ASSERT_EQ(chunks.size(), 4u);
  EXPECT_EQ(chunks[0].text, "w0 w1 w2 w3 w4 w5 w6 w7 w8 w9");
  EXPECT_EQ(chunks[1].text.substr(0, 2), "w7");
  for (const auto& c : chunks) EXPECT_EQ(text.substr(c.char_span.begin, c.char_span.size()), c.text);
}
