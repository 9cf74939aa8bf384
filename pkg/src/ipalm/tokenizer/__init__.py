from .bpe import (
    EOT,
    EOT_ID,
    FIRST_MERGE_ID,
    Tokenizer,
    bpe_train,
    byte_tokenizer,
    pretokenize,
)

__all__ = ["EOT", "EOT_ID", "FIRST_MERGE_ID", "Tokenizer", "bpe_train", "byte_tokenizer", "pretokenize"]
