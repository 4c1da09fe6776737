#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <string_view>

#include "selfreflect/errors.hpp"
#include "selfreflect/hashing.hpp"
#include "selfreflect/utf8.hpp"

namespace selfreflect {

// Lowercased residue of a word with leading/trailing punctuation stripped.
inline std::string normalize_for_stopword(std::string_view word) {
  const auto cps = utf8::code_points(word);
  std::size_t b = 0, e = cps.size();
  while (b < e && (utf8::is_punct(cps[b]) || utf8::is_space(cps[b]))) ++b;
  while (e > b && (utf8::is_punct(cps[e - 1]) || utf8::is_space(cps[e - 1]))) --e;
  std::string out;
  for (std::size_t i = b; i < e; ++i) utf8::append(out, utf8::to_lower(cps[i]));
  return out;
}

class StopwordList {
 public:
  StopwordList() = default;
  StopwordList(std::string id, std::set<std::string> words) : id_(std::move(id)) {
    for (const auto& w : words) words_.insert(normalize_for_stopword(w));
  }

  // Frozen English list (the 179-word NLTK list).
  static StopwordList english() {
    static const char* const kWords[] = {
        "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "you're",
        "you've", "you'll", "you'd", "your", "yours", "yourself", "yourselves", "he", "him", "his",
        "himself", "she", "she's", "her", "hers", "herself", "it", "it's", "its", "itself",
        "they", "them", "their", "theirs", "themselves", "what", "which", "who", "whom", "this",
        "that", "that'll", "these", "those", "am", "is", "are", "was", "were", "be",
        "been", "being", "have", "has", "had", "having", "do", "does", "did", "doing",
        "a", "an", "the", "and", "but", "if", "or", "because", "as", "until",
        "while", "of", "at", "by", "for", "with", "about", "against", "between", "into",
        "through", "during", "before", "after", "above", "below", "to", "from", "up", "down",
        "in", "out", "on", "off", "over", "under", "again", "further", "then", "once",
        "here", "there", "when", "where", "why", "how", "all", "any", "both", "each",
        "few", "more", "most", "other", "some", "such", "no", "nor", "not", "only",
        "own", "same", "so", "than", "too", "very", "s", "t", "can", "will",
        "just", "don", "don't", "should", "should've", "now", "d", "ll", "m", "o",
        "re", "ve", "y", "ain", "aren", "aren't", "couldn", "couldn't", "didn", "didn't",
        "doesn", "doesn't", "hadn", "hadn't", "hasn", "hasn't", "haven", "haven't", "isn", "isn't",
        "ma", "mightn", "mightn't", "mustn", "mustn't", "needn", "needn't", "shan", "shan't", "shouldn",
        "shouldn't", "wasn", "wasn't", "weren", "weren't", "won", "won't", "wouldn", "wouldn't",
    };
    return StopwordList("english", std::set<std::string>(std::begin(kWords), std::end(kWords)));
  }

  static StopwordList none() { return StopwordList("none", {}); }

  // "english", "none", or a path to a file with one word per line.
  static StopwordList load(const std::string& id_or_path) {
    if (id_or_path.empty() || id_or_path == "english") return english();
    if (id_or_path == "none") return none();
    std::ifstream in(id_or_path);
    if (!in) throw Error("unknown stopword list: " + id_or_path);
    std::set<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
      auto w = utf8::trim(line);
      if (!w.empty() && w[0] != '#') words.insert(w);
    }
    return StopwordList(id_or_path, std::move(words));
  }

  bool is_stopword(std::string_view word) const {
    return words_.count(normalize_for_stopword(word)) > 0;
  }

  const std::string& id() const { return id_; }
  const std::set<std::string>& words() const { return words_; }

  std::string hash() const {
    std::string buf;
    for (const auto& w : words_) buf += w + "\n";
    return sha256_hex(buf);
  }

 private:
  std::string id_;
  std::set<std::string> words_;
};

}  // namespace selfreflect
