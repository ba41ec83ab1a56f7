"""
Model objects for the reports produced by training, evaluation, the attack suite and the benchmark.

Each report exposes columns() and rows() so that the crosswalks in service.xwalks can render it as
an aligned table or a structured record, and from_record() so that a structured record reads back
into the same object.
"""


class Report(object):
    """
    Base class for all reports
    """
    kind = "report"

    def columns(self):
        raise NotImplementedError()

    def rows(self):
        raise NotImplementedError()

    def to_record(self):
        raise NotImplementedError()

    @classmethod
    def from_record(cls, record):
        raise NotImplementedError()

    def __eq__(self, other):
        return type(self) == type(other) and self.to_record() == other.to_record()

    def __ne__(self, other):
        return not self.__eq__(other)


class TrainReport(Report):
    """
    Per-iteration losses of one UFP optimisation, the final evasion rates and the wall time
    """
    kind = "train"

    def __init__(self, total=None, feature=None, perception=None, train_evasion=None, heldout_evasion=None, wall_time=0.0):
        self.total = list(total or [])
        self.feature = list(feature or [])
        self.perception = list(perception or [])
        self.train_evasion = train_evasion
        self.heldout_evasion = heldout_evasion
        self.wall_time = wall_time

    def append(self, total, feature, perception):
        self.total.append(float(total))
        self.feature.append(float(feature))
        self.perception.append(float(perception))

    @property
    def iterations(self):
        return len(self.total)

    def losses(self):
        """
        The deterministic part of the report, used to compare two runs

        :return: tuple of the three loss lists
        """
        return (self.total, self.feature, self.perception)

    def columns(self):
        return ["iteration", "total", "feature", "perception"]

    def rows(self):
        return [[i + 1, t, f, p] for i, (t, f, p) in enumerate(zip(self.total, self.feature, self.perception))]

    def to_record(self):
        return {
            "kind": self.kind,
            "total": self.total,
            "feature": self.feature,
            "perception": self.perception,
            "train_evasion": self.train_evasion,
            "heldout_evasion": self.heldout_evasion,
            "wall_time": self.wall_time
        }

    @classmethod
    def from_record(cls, record):
        return cls(record.get("total"), record.get("feature"), record.get("perception"),
                   record.get("train_evasion"), record.get("heldout_evasion"), record.get("wall_time", 0.0))

    def summary(self):
        """
        Footer lines for the plain text rendering

        :return: list of (name, value)
        """
        return [("train_evasion", self.train_evasion), ("heldout_evasion", self.heldout_evasion),
                ("wall_time", self.wall_time)]


class EvalReport(Report):
    """
    The metric suite for one evaluation: EER and threshold, SPR/DPR/match rate (None when no clones
    were supplied), evasion rate, mean segmental SNR and real-time coefficient
    """
    kind = "eval"

    FIELDS = ["eer", "threshold", "spr", "dpr", "match_rate", "evasion_rate", "seg_snr_db", "rtc"]

    def __init__(self, eer=None, threshold=None, spr=None, dpr=None, match_rate=None, evasion_rate=None,
                 seg_snr_db=None, rtc=None, label="evaluation"):
        self.eer = eer
        self.threshold = threshold
        self.spr = spr
        self.dpr = dpr
        self.match_rate = match_rate
        self.evasion_rate = evasion_rate
        self.seg_snr_db = seg_snr_db
        self.rtc = rtc
        self.label = label

    def columns(self):
        return ["label"] + self.FIELDS

    def rows(self):
        return [[self.label] + [getattr(self, f) for f in self.FIELDS]]

    def to_record(self):
        record = {"kind": self.kind, "label": self.label}
        record.update({f: getattr(self, f) for f in self.FIELDS})
        return record

    @classmethod
    def from_record(cls, record):
        return cls(label=record.get("label", "evaluation"), **{f: record.get(f) for f in cls.FIELDS})


class AttackTable(Report):
    """
    One EvalReport row per setting, keyed by its label: the attack name (with the identity row first) or,
    for the sweeps, the value of the parameter being varied
    """
    kind = "attacks"

    def __init__(self, reports=None, key="attack"):
        self.reports = list(reports or [])
        self.key = key

    def add(self, report):
        self.reports.append(report)

    def get(self, label):
        for r in self.reports:
            if r.label == label:
                return r
        return None

    def labels(self):
        return [r.label for r in self.reports]

    def columns(self):
        return [self.key] + EvalReport.FIELDS

    def rows(self):
        rows = []
        for r in self.reports:
            rows.extend(r.rows())
        return rows

    def to_record(self):
        return {"kind": self.kind, "key": self.key, "rows": [r.to_record() for r in self.reports]}

    @classmethod
    def from_record(cls, record):
        return cls([EvalReport.from_record(r) for r in record.get("rows", [])], record.get("key", "attack"))


class BenchTable(Report):
    """
    Real-time coefficients per audio duration, plus the parameter efficiency figures
    """
    kind = "bench"

    def __init__(self, timings=None, p_freq=None, p_time=None):
        self.timings = [(float(d), float(r)) for d, r in (timings or [])]
        self.p_freq = p_freq
        self.p_time = p_time

    def columns(self):
        return ["duration_s", "rtc"]

    def rows(self):
        return [[d, r] for d, r in self.timings]

    def to_record(self):
        return {"kind": self.kind, "timings": [list(t) for t in self.timings], "p_freq": self.p_freq,
                "p_time": self.p_time}

    @classmethod
    def from_record(cls, record):
        return cls(record.get("timings"), record.get("p_freq"), record.get("p_time"))

    def summary(self):
        return [("p_freq", self.p_freq), ("p_time", self.p_time)]
