import json

import click
import numpy as np
import prettytable

STATUS_COLORS = {'pass': 'green', 'fail': 'red', 'n/a': 'yellow'}


class Display:
    '''Shows reports, tables and summaries on the terminal, either as pretty tables or as JSON.
    Every command that prints something goes through here so --json behaves the same everywhere.
    '''

    def __init__(self, color=True):
        self.color = color

    def _style(self, text, fg):
        return click.style(text, fg=fg) if self.color else text

    def show_raw(self, data, use_json=False):
        '''dump an arbitrary structure: JSON, or one "key value" line per entry'''
        if use_json:
            click.echo(json.dumps(self._force_json(data), sort_keys=True, indent=2))
        elif isinstance(data, dict):
            width = max((len(str(k)) for k in data), default=0)
            for k, v in data.items():
                click.echo('  {0: <{fill}}  {1}'.format(str(k), self._format(v), fill=width))
        elif isinstance(data, (list, tuple)):
            for item in data:
                self.show_raw(item)
        else:
            click.echo(data)

    def _format(self, value):
        if isinstance(value, float):
            return '{0:.6g}'.format(value)
        return value

    def _force_json(self, for_json):
        '''make numpy scalars/arrays and non-finite floats json-serializable
        :param object for_json: object to be encoded
        '''
        if isinstance(for_json, np.ndarray):
            return self._force_json(for_json.tolist())
        elif isinstance(for_json, np.generic):
            return self._force_json(for_json.item())
        elif isinstance(for_json, float) and not np.isfinite(for_json):
            return str(for_json)
        elif isinstance(for_json, (list, tuple)):
            return [self._force_json(x) for x in for_json]
        elif isinstance(for_json, dict):
            return {str(k): self._force_json(v) for k, v in for_json.items()}
        elif isinstance(for_json, bytes):
            return for_json.decode('utf8')
        else:
            return for_json

    def show_report(self, report, use_json=False):
        '''one row per check, status coloured

        :param InvariantReport report: checks to show
        '''
        frame = report.to_frame()
        if use_json:
            self.show_raw({'metadata': report.metadata, 'checks': frame.to_dict('records')}, use_json=True)
            return
        table = prettytable.PrettyTable()
        table.field_names = ['check', 'status', 'value', 'tolerance', 'fatal', 'detail']
        table.align = 'l'
        table.hrules = prettytable.FRAME
        for c in report.checks:
            table.add_row(
                [c.name, self._style(c.status.upper(), STATUS_COLORS[c.status]), '{0:.6g}'.format(c.value),
                 '{0:.3g}'.format(c.tolerance), 'yes' if c.fatal else 'no', c.detail]
            )
        click.echo(table.get_string())
        if report.failed():
            click.secho('Failed: {0}'.format(', '.join(report.failed())), fg='red' if self.color else None)
        else:
            click.secho('All fatal checks passed', fg='green' if self.color else None)

    def show_table(self, frame, use_json=False, title=None):
        '''pandas DataFrame as a prettytable (floats to 6 significant digits)'''
        if use_json:
            self.show_raw(frame.to_dict('records'), use_json=True)
            return
        if frame.empty:
            click.secho('Nothing to show', fg='red' if self.color else None)
            return
        table = prettytable.PrettyTable()
        table.field_names = list(frame.columns)
        table.align = 'r'
        for row in frame.itertuples(index=False):
            table.add_row([self._format(v) for v in row])
        if title:
            click.secho(title, fg='blue' if self.color else None, bold=self.color)
        click.echo(table.get_string())

    def show_summary(self, title, data, use_json=False):
        if use_json:
            self.show_raw(data, use_json=True)
            return
        click.secho(title, fg='blue' if self.color else None, bold=self.color)
        self.show_raw(data)
