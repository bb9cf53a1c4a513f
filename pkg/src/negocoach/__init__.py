"""Real-time negotiation coaching for seller-buyer bargaining chats.

The pipeline has four stages, applied every time it is the seller's turn:
detect tactics in past turns, predict which tactics are likely next, keep
the ones a trained outcome classifier says improve the seller's deal, and
render the survivors as a natural-language suggestion with retrieved
exemplar utterances.
"""

__version__ = "0.1.0"

from negocoach.registry import DEFAULT_REGISTRY, TacticRegistry

__all__ = ["DEFAULT_REGISTRY", "TacticRegistry", "__version__"]
