from __future__ import annotations

import pytest
import torch
from transformers import BertConfig, BertModel, BertTokenizerFast

UNITS = [onset + vowel for onset in "bdfgklmnprstvz" for vowel in "aeiou"]

TREEBANK = """\
# ten-sentence sample; four-char words split into two wordpieces
(S (NP (DT bifu) (NN beva)) (VP (V begi) (NP (DT ka) (NN bese))) (. .))
(S (NP bale) (VP (V ka) (NP (DT bifu) (NN ta))))
(S (A bifu) (B beva) (C begi) (D bese) (E bale))
(S (NP (DT ta) (NN ka)) (VP (V bifu)))
(S (X (Y (Z bese))) (W beva) (, ,) (V bale))
(S (A ka) (B ta))
(S (NP (DT bifu) (NN bifu)) (VP (V bifu)))
(S (A bale) (VP (V beva) (NP (DT begi) (NN bese) (PP (P ka) (NP ta)))))
(S (A ta) (B bale) (C ka))
(S (NP (DT beva) (NN begi)) (VP (V bese) (NP (DT bale) (NN bifu))) (. !))
"""


def _make_checkpoint(tmp_path, name: str, is_decoder: bool) -> str:
    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    vocab += UNITS + ["##" + u for u in UNITS]
    vocab_file = tmp_path / f"{name}-vocab.txt"
    vocab_file.write_text("\n".join(vocab) + "\n", encoding="utf-8")
    tokenizer = BertTokenizerFast(str(vocab_file))
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=64,
        is_decoder=is_decoder,
        attn_implementation="eager",
    )
    torch.manual_seed(7 if is_decoder else 5)
    model = BertModel(config)
    model.eval()
    out = tmp_path / name
    model.save_pretrained(out)
    tokenizer.save_pretrained(out)
    return str(out)


@pytest.fixture(scope="session")
def encoder_checkpoint(tmp_path_factory) -> str:
    return _make_checkpoint(tmp_path_factory.mktemp("ckpt"), "encoder", is_decoder=False)


@pytest.fixture(scope="session")
def decoder_checkpoint(tmp_path_factory) -> str:
    return _make_checkpoint(tmp_path_factory.mktemp("ckpt"), "decoder", is_decoder=True)


@pytest.fixture(scope="session")
def treebank_file(tmp_path_factory) -> str:
    path = tmp_path_factory.mktemp("data") / "treebank.txt"
    path.write_text(TREEBANK, encoding="utf-8")
    return str(path)
