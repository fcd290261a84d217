#pragma once

// Generator for synthetic case proceedings with known ground truth: planted
// headers, page markers, names, a class-specific cue sentence near the end,
// and a closing decision section. Used by the test suites and by
// `cjpe synth` for demos.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cjpe/corpus.hpp"
#include "cjpe/rng.hpp"

namespace cjpe::synthetic {

inline const std::vector<std::string>& filler_words() {
  static const std::vector<std::string> words = {
      "the", "of", "and", "to", "in", "that", "was", "by", "for", "on", "with", "as", "an", "from", "which",
      "said", "court", "section", "act", "learned", "counsel", "respondent", "appellant", "state", "evidence",
      "witness", "trial", "judge", "case", "order", "notice", "under", "provisions", "clause", "period", "land",
      "rent", "tenant", "landlord", "contract", "agreement", "deed", "property", "suit", "decree", "plaintiff",
      "defendant", "petitioner", "tribunal", "assessment", "tax", "income", "revenue", "officer", "authority",
      "government", "notification", "rule", "regulation", "service", "employee", "salary", "pension", "promotion",
      "seniority", "inquiry", "report", "statement", "document", "record", "hearing", "date", "year", "month",
      "application", "proceedings", "matter", "question", "point", "issue", "argument", "submission", "contention",
      "reference", "clause", "schedule", "article", "constitution", "right", "duty", "liability", "claim",
      "amount", "payment", "interest", "compensation", "acquisition", "municipal", "corporation", "company",
      "shares", "director", "licence", "permit", "goods", "sale", "purchase", "transport", "vehicle", "accident",
      "police", "station", "complaint", "offence", "accused", "prosecution", "charge", "sentence", "imprisonment",
      "bail", "custody", "district", "village", "revenue", "collector", "survey", "boundary", "possession",
      "title", "owner", "lease", "mortgage", "bank", "loan", "account", "entry", "register", "certificate",
      "election", "candidate", "nomination", "ballot", "vote", "member", "committee", "meeting", "resolution",
      "filed", "stated", "observed", "considered", "referred", "relied", "produced", "examined", "recorded",
      "issued", "passed", "made", "given", "taken", "held", "noted", "found", "urged", "raised", "contended",
      "therefore", "however", "further", "also", "thereafter", "accordingly", "namely", "whether", "where",
      "other", "such", "same", "any", "all", "no", "not", "there", "this", "these", "those", "his", "their",
      "first", "second", "third", "two", "three", "several", "various", "certain", "relevant", "material"};
  return words;
}

// Class-specific cue vocabulary. None of these words occur in the filler.
inline const std::array<std::vector<std::string>, 2>& cue_sentences() {
  static const std::array<std::vector<std::string>, 2> cues = {{
      {"The findings recorded below are well founded, cogent and fully justified, and call for no interference "
       "whatsoever.",
       "We are satisfied that the impugned judgment is sound, reasoned and correct, warranting no interference.",
       "The concurrent findings are unimpeachable and the reasoning is sound, cogent and justified in every "
       "respect.",
       "There is no infirmity, illegality or perversity in the well reasoned conclusions, which are fully "
       "justified."},
      {"The impugned judgment is perverse, erroneous and wholly unsustainable, having misdirected itself on "
       "settled principles.",
       "We find that the courts below erred grievously and misconstrued the statute, rendering the conclusion "
       "unsustainable.",
       "The reasoning is manifestly erroneous and perverse, vitiated by misreading and misappreciation of the "
       "material.",
       "The conclusion is vitiated, unsustainable and erroneous, the forum having misdirected itself and erred "
       "fundamentally."},
  }};
  return cues;
}

inline const std::vector<std::string>& surnames() {
  static const std::vector<std::string> names = {"Rao",    "Sharma",  "Iyer",  "Menon",  "Reddy", "Gupta",
                                                  "Bose",   "Chatterjee", "Nair", "Pillai", "Verma", "Kapoor",
                                                  "Mehta",  "Desai",   "Joshi", "Kulkarni", "Banerjee", "Sinha"};
  return names;
}

struct Options {
  std::size_t num_docs = 200;
  std::size_t min_tokens = 600;
  std::size_t max_tokens = 1800;
  double accepted_fraction = 0.5;
  double multi_petition_fraction = 0.1;
  double header_fraction = 0.8;
  double page_marker_rate = 0.02;  // per sentence
  double name_rate = 0.03;         // per sentence
  double unlabeled_fraction = 0.0;
  std::uint64_t seed = 1;
};

struct Case {
  RawCase raw;
  std::optional<Decision> label;
  std::vector<Decision> petitions;
  std::string cue_sentence;
  bool has_header = false;
  std::size_t page_markers = 0;
  std::vector<std::string> planted_names;
};

inline std::string filler_sentence(Rng& rng, std::size_t words) {
  std::string s;
  const auto& vocab = filler_words();
  for (std::size_t i = 0; i < words; ++i) {
    std::string w = rng.pick(vocab);
    if (i == 0) w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
    if (i) s += (rng.bernoulli(0.06) ? ", " : " ");
    s += w;
  }
  if (rng.bernoulli(0.05)) s += " under Sec. " + std::to_string(1 + rng.below(400)) + " of the act";
  return s + ".";
}

inline std::string header(Rng& rng, const std::string& id) {
  return "IN THE SUPREME COURT OF INDIA\nCIVIL APPELLATE JURISDICTION\nCivil Appeal No. " +
         std::to_string(100 + rng.below(9000)) + " of " + std::to_string(1950 + rng.below(70)) +
         "\nCase " + id + "\n\n";
}

inline std::string decision_section(Rng& rng, const std::vector<Decision>& petitions) {
  if (petitions.size() == 1) {
    static const std::array<std::vector<std::string>, 2> single = {{
        {"The appeal is dismissed with costs.", "In the result, the appeal fails.", "The appeal is dismissed.",
         "Accordingly we dismiss the appeal."},
        {"The appeal is allowed with costs.", "In the result, the appeal is allowed.", "We allow the appeal.",
         "The appeal is accepted and the matter is remitted."},
    }};
    return rng.pick(single[static_cast<int>(petitions[0])]);
  }
  std::string s;
  for (std::size_t i = 0; i < petitions.size(); ++i) {
    if (i) s += ' ';
    s += "Appeal No. " + std::to_string(i + 1) + (petitions[i] == Decision::Accepted ? " is allowed." : " is dismissed.");
  }
  return s;
}

inline Case make_case(Rng& rng, const Options& opt, std::size_t index) {
  Case c;
  c.raw.id = std::to_string(1950 + index % 70) + "_" + std::to_string(index);
  const bool labeled = !rng.bernoulli(opt.unlabeled_fraction);
  const Decision label = rng.bernoulli(opt.accepted_fraction) ? Decision::Accepted : Decision::Rejected;
  if (labeled) {
    c.label = label;
    if (rng.bernoulli(opt.multi_petition_fraction)) {
      const std::size_t n = 2 + rng.below(2);
      for (std::size_t i = 0; i < n; ++i) c.petitions.push_back(rng.bernoulli(0.5) ? Decision::Accepted : Decision::Rejected);
      // Force the petitions to resolve to the planted label.
      if (label == Decision::Accepted) c.petitions[rng.below(n)] = Decision::Accepted;
      else std::fill(c.petitions.begin(), c.petitions.end(), Decision::Rejected);
    } else {
      c.petitions.push_back(label);
    }
  }
  c.cue_sentence = rng.pick(cue_sentences()[static_cast<int>(label)]);

  std::string text;
  c.has_header = rng.bernoulli(opt.header_fraction);
  if (c.has_header) text += header(rng, c.raw.id);

  const std::size_t target = opt.min_tokens + rng.below(opt.max_tokens - opt.min_tokens + 1);
  std::size_t tokens = 0;
  bool first = true;
  while (tokens < target) {
    const std::size_t words = 8 + rng.below(14);
    std::string sentence = filler_sentence(rng, words);
    if (rng.bernoulli(opt.name_rate)) {
      const auto& name = rng.pick(surnames());
      c.planted_names.push_back(name);
      sentence.pop_back();
      sentence += " as stated by Justice " + name + ".";
    }
    if (!first) text += rng.bernoulli(0.15) ? "\n" : " ";
    if (!first && rng.bernoulli(opt.page_marker_rate)) {
      text += "\nPage " + std::to_string(c.page_markers + 1) + " of 40\n";
      ++c.page_markers;
    }
    text += sentence;
    tokens += words + 1;
    first = false;
  }
  text += " " + c.cue_sentence;
  text += " " + filler_sentence(rng, 6 + rng.below(6));
  if (labeled) text += "\n" + decision_section(rng, c.petitions);
  text += "\n";
  c.raw.raw_text = std::move(text);
  return c;
}

inline std::vector<Case> generate(const Options& opt) {
  Rng rng(opt.seed);
  std::vector<Case> out;
  out.reserve(opt.num_docs);
  for (std::size_t i = 0; i < opt.num_docs; ++i) out.push_back(make_case(rng, opt, i));
  return out;
}

}  // namespace cjpe::synthetic
