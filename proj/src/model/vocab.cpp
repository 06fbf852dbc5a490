#include "stitch/model/vocab.hpp"

#include <cstring>

#include "stitch/corpus/templates.hpp"
#include "stitch/errors.hpp"

namespace stitch::model {

Vocab::Vocab() {
    // Lowercase, uppercase, digits, and the punctuation used by templates.
    alphabet_ =
        "abcdefghijklmnopqrstuvwxyz"
        "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
        "0123456789"
        " ,:().-_'&";
    std::memset(char_to_id_, -1, sizeof(char_to_id_));
    for (char c : alphabet_) {
        char_to_id_[static_cast<unsigned char>(c)] = static_cast<int>(id_to_token_.size());
        id_to_token_.push_back(std::string(1, c));
    }
    bos_id_ = static_cast<int>(id_to_token_.size());
    id_to_token_.push_back("<bos>");
    eos_id_ = static_cast<int>(id_to_token_.size());
    id_to_token_.push_back("<eos>");
    vis_id_ = static_cast<int>(id_to_token_.size());
    id_to_token_.push_back(std::string(corpus::kVisualMarker));
}

bool Vocab::has_char(char c) const { return char_to_id_[static_cast<unsigned char>(c)] >= 0; }

int Vocab::char_id(char c) const {
    const int id = char_to_id_[static_cast<unsigned char>(c)];
    if (id < 0) {
        throw ConfigError("vocab: unsupported byte 0x" + std::to_string(static_cast<unsigned char>(c)));
    }
    return id;
}

std::vector<int> Vocab::encode(const std::string& text) const {
    std::vector<int> out;
    out.reserve(text.size());
    const std::string marker(corpus::kVisualMarker);
    size_t i = 0;
    while (i < text.size()) {
        if (text.compare(i, marker.size(), marker) == 0) {
            out.push_back(vis_id_);
            i += marker.size();
            continue;
        }
        out.push_back(char_id(text[i]));
        ++i;
    }
    return out;
}

std::string Vocab::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
        if (id < 0 || id >= size()) throw ConfigError("vocab: token id out of range");
        out += id_to_token_[static_cast<size_t>(id)];
    }
    return out;
}

}  // namespace stitch::model
