from .model import DecoderBlock, GPTConfig, GPTModel, gpt_forward, param_count_gpt

__all__ = ["DecoderBlock", "GPTConfig", "GPTModel", "gpt_forward", "param_count_gpt"]
