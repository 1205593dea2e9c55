"""Label sets for the articulation experiments.

These are the stimulus vocabularies used by the recording protocol:
orofacial calibration gestures, consonant/vowel phonemes (consonants
carry a place-and-manner grouping used for error analysis), words
covering the English phonetic space, and the NATO spelling alphabet.
"""

from __future__ import annotations

from typing import Dict, Tuple

GESTURE_LABELS: Tuple[str, ...] = (
    "cheeks-puff-out",
    "cheeks-suck-in",
    "jaw-dropdown",
    "jaw-move-backward",
    "jaw-move-forward",
    "jaw-move-left",
    "jaw-move-right",
    "lips-pucker",
    "lips-smile",
    "lips-tuck",
    "tongue-back-of-lower-teeth",
    "tongue-back-of-upper-teeth",
    "tongue-roof-of-mouth",
)

CONSONANT_GROUPS: Dict[str, Tuple[str, ...]] = {
    "bilabial": ("Baa", "Paa", "Maa"),
    "labiodental": ("Faa", "Vaa"),
    "dental": ("Thaa", "Dhaa"),
    "alveolar": ("Taa", "Daa", "Naa", "Saa", "Zaa"),
    "post-velar": ("Chaa", "Shaa", "Jhaa", "Zhaa"),
    "velar": ("Kaa", "Gaa", "NGaa"),
    "approximant": ("Yaa", "Raa", "Laa", "Waa"),
}

CONSONANT_LABELS: Tuple[str, ...] = tuple(
    label for group in CONSONANT_GROUPS.values() for label in group
)

VOWEL_LABELS: Tuple[str, ...] = (
    "OY", "OW", "AO", "AA", "AW", "AY", "AE", "EH",
    "EY", "IY", "IH", "AH", "UW", "ER", "UH",
)

PHONEME_LABELS: Tuple[str, ...] = CONSONANT_LABELS + VOWEL_LABELS

WORD_LABELS: Tuple[str, ...] = (
    "Eager", "lift", "eight", "edge", "cap", "matted", "tub", "box", "rune",
    "rook", "folder", "block", "fun", "mop", "pod", "very", "went",
    "throat", "this", "tango", "doubt", "not", "pretty", "xerox",
    "rodent", "limb", "batch", "jeep", "ship", "beige",
    "yes", "echo", "gold", "sing", "Uh-oh", "hiccup",
)

NATO_LABELS: Tuple[str, ...] = (
    "Alfa", "Bravo", "Charlie", "Delta", "Echo", "Foxtrot", "Golf", "Hotel",
    "India", "Juliette", "Kilo", "Lima", "Mike", "November", "Oscar", "Papa",
    "Quebec", "Romeo", "Sierra", "Tango", "Uniform", "Victor", "Whiskey",
    "X-ray", "Yankee", "Zulu",
)


def vocabulary(labels: Tuple[str, ...]) -> Dict[str, int]:
    """Dense label -> class-id mapping in declaration order."""
    return {label: i for i, label in enumerate(labels)}
