"""
Crosswalks from report objects to the supported output formats
"""
import json

from service.core import app
from service.models import TrainReport, EvalReport, AttackTable, BenchTable
from service.ufptools import ServiceException, ConfigurationException, load_class

REPORT_KINDS = {cls.kind: cls for cls in (TrainReport, EvalReport, AttackTable, BenchTable)}


class ReportFormatException(ServiceException):
    """
    Exception class for report text which can't be read back
    """
    tag = "report-format"


#####################################################################
## Crosswalks
#####################################################################

class ReportCrosswalk(object):
    """
    Base class for all report crosswalks
    """
    extension = "txt"

    def serialise(self, report):
        """
        Render the report

        :param report: a service.models.reports.Report
        :return: text
        """
        raise NotImplementedError()

    def parse(self, text):
        """
        Read a rendered report back

        :param text: output of serialise()
        :return: the report object
        """
        raise NotImplementedError()


def format_value(value):
    if value is None:
        return u"n/a"
    if isinstance(value, float):
        return u"{x:.6g}".format(x=value)
    if isinstance(value, int):
        return u"{x:,}".format(x=value) if abs(value) >= 10000 else str(value)
    return str(value)


class TextTable(ReportCrosswalk):
    """
    Aligned plain text: a header row, one line per row, then '# name: value' footer lines
    """
    extension = "txt"

    def serialise(self, report):
        header = [str(c) for c in report.columns()]
        body = [[format_value(v) for v in row] for row in report.rows()]
        widths = [max([len(header[i])] + [len(r[i]) for r in body]) for i in range(len(header))]

        lines = [u"  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
        for row in body:
            lines.append(u"  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip())
        if hasattr(report, "summary"):
            for name, value in report.summary():
                lines.append(u"# {n}: {v}".format(n=name, v=format_value(value)))
        return u"\n".join(lines) + u"\n"


class JSONRecord(ReportCrosswalk):
    """
    Machine-readable structured record.  Reads back into an equal report object.
    """
    extension = "json"

    def serialise(self, report):
        return json.dumps(report.to_record(), indent=2, sort_keys=True) + "\n"

    def parse(self, text):
        try:
            record = json.loads(text)
        except ValueError as e:
            raise ReportFormatException(u"report is not valid JSON: {x}".format(x=e))
        kind = record.get("kind") if isinstance(record, dict) else None
        if kind not in REPORT_KINDS:
            raise ReportFormatException(u"unknown report kind {x}".format(x=kind))
        return REPORT_KINDS[kind].from_record(record)


def get_crosswalk(fmt):
    """
    Crosswalk for a format name, as configured in REPORT_CROSSWALKS

    :param fmt: e.g. "text" or "json"
    :return: ReportCrosswalk instance
    """
    xwalks = app.config.get("REPORT_CROSSWALKS", {})
    if fmt not in xwalks:
        raise ConfigurationException(u"REPORT_CROSSWALKS: no crosswalk for format {x}".format(x=fmt))
    return load_class(xwalks[fmt])()


def write_report(report, path, fmt=None):
    """
    Serialise a report to a file.  The format defaults to json for .json paths and text otherwise.

    :param report: the report
    :param path: destination
    :param fmt: format name
    :return:
    """
    fmt = fmt or ("json" if path.lower().endswith(".json") else "text")
    text = get_crosswalk(fmt).serialise(report)
    try:
        with open(path, "w") as f:
            f.write(text)
    except (IOError, OSError) as e:
        raise ServiceException(u"unable to write report to {x}: {y}".format(x=path, y=e))
    app.logger.info(u"Wrote {k} report to {x}".format(k=report.kind, x=path))


def read_report(path):
    """
    Read a structured report file

    :param path: a file written by the json crosswalk
    :return: the report object
    """
    try:
        with open(path) as f:
            text = f.read()
    except (IOError, OSError) as e:
        raise ReportFormatException(u"unable to read report {x}: {y}".format(x=path, y=e))
    return get_crosswalk("json").parse(text)
