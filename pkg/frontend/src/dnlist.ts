/**
 * Editor model for dn-list group files: one DN per line, `#` comment
 * lines and blank lines ignored by consumers. Edits touch only member
 * lines; comments and blanks are preserved verbatim.
 */

export class DnListModel {
  constructor(public lines: string[] = []) {}

  static parse(text: string): DnListModel {
    // A trailing newline does not add an empty member line.
    const lines = text.split("\n");
    if (lines.length > 0 && lines[lines.length - 1] === "") lines.pop();
    return new DnListModel(lines);
  }

  private static isMemberLine(line: string): boolean {
    const t = line.trimEnd();
    return t !== "" && !t.startsWith("#");
  }

  members(): string[] {
    return this.lines.filter(DnListModel.isMemberLine).map((l) => l.trimEnd());
  }

  has(dn: string): boolean {
    return this.members().includes(dn);
  }

  add(dn: string): void {
    if (!this.has(dn)) this.lines.push(dn);
  }

  remove(dn: string): void {
    this.lines = this.lines.filter(
      (l) => !(DnListModel.isMemberLine(l) && l.trimEnd() === dn));
  }

  serialize(): string {
    return this.lines.map((l) => l + "\n").join("");
  }
}
