from ..errors import ContractError
from .config import ModelConfig


def param_count_ipa(config: ModelConfig, m: int) -> int:
    """Exact scalar parameter count of an IPA model run at sequence length ``m``.

    The positional row bias contributes ``n * m`` per layer, so this equals
    the size of a model built with ``m_max = m``.
    """
    if not 1 <= m <= config.m_max:
        raise ContractError(f"m={m} outside [1, m_max={config.m_max}]")
    n, k, v = config.n, config.k, config.vocab_size
    total = v * n + v
    if not config.tie_head:
        total += v * n
    per_layer = (
        config.p_col * 2 * n * k        # S_left, S_right
        + config.p_col * 2 * n * k      # W_left, W_right
        + n                             # column bias
        + config.p_row * (n * n + n + 1)  # A, centre, log sigma
        + n * m                         # positional row bias
    )
    if config.layernorm:
        per_layer += 4 * n
    return total + config.n_layers * per_layer
