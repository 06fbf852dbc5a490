#pragma once

#include <string>
#include <vector>

namespace stitch::model {

// Character-level tokenizer over a fixed alphabet plus three specials
// (begin/end markers and the visual slot). One token per character keeps
// every 5-character synthetic ID at exactly 5 tokens, so summed log-prob
// candidate scores carry no length bias.
class Vocab {
  public:
    Vocab();

    int size() const { return static_cast<int>(id_to_token_.size()); }
    int bos_id() const { return bos_id_; }
    int eos_id() const { return eos_id_; }
    int vis_id() const { return vis_id_; }

    bool has_char(char c) const;
    int char_id(char c) const;  // throws ConfigError on unsupported bytes

    // Encodes text that may contain the visual marker (as the VIS token).
    // Reversible: decode(encode(s)) == s for every template string.
    std::vector<int> encode(const std::string& text) const;
    std::string decode(const std::vector<int>& ids) const;

    // The alphabet string; hashed into checkpoints to detect drift.
    const std::string& alphabet() const { return alphabet_; }

  private:
    std::string alphabet_;
    std::vector<std::string> id_to_token_;
    int char_to_id_[256];
    int bos_id_ = -1;
    int eos_id_ = -1;
    int vis_id_ = -1;
};

}  // namespace stitch::model
