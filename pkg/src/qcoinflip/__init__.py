from qcoinflip.analytics import ProtocolParams, alice_cheat, bob_cheat_bound, classical_bound, event_probs, honest_abort
from qcoinflip.channel import ChannelParams, SourceParams
from qcoinflip.optimizer import (FairPoint, NoFairPoint, TargetUnreachable, advantage_crossover, limit_length_sweep,
                                 optimize, sweep_figure)
from qcoinflip.simulator import estimate_honest_abort, run_honest

__all__ = [
    'ChannelParams', 'SourceParams', 'ProtocolParams',
    'honest_abort', 'alice_cheat', 'event_probs', 'bob_cheat_bound', 'classical_bound',
    'run_honest', 'estimate_honest_abort',
    'FairPoint', 'NoFairPoint', 'TargetUnreachable', 'optimize', 'sweep_figure',
    'advantage_crossover', 'limit_length_sweep',
]
