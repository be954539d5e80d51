from dataclasses import dataclass

SOAP_SECTIONS = ("subjective", "objective", "assessment", "plan")


@dataclass(frozen=True)
class SoapSummary:
    """The four trimmed sections of a clinical summary, raw_text is the text they were parsed from."""

    subjective: str = ""
    objective: str = ""
    assessment: str = ""
    plan: str = ""
    raw_text: str = ""

    def sections(self) -> dict[str, str]:
        return {name: getattr(self, name) for name in SOAP_SECTIONS}
