/**
 * Form model for GACL access control lists.
 *
 * Parses the server's XML into editable rows and serializes back to the
 * same canonical form the server emits, so an edit-nothing save is a
 * byte-identical round trip. Validation here only catches mistakes before
 * a request is made; the server re-validates everything.
 *
 * The XML dialect is tiny and fixed, and browsers' DOMParser is not
 * available in the test runner, so a small strict parser lives here
 * instead of a DOM dependency.
 */

export type PermissionName = "read" | "list" | "write" | "admin";
export const PERMISSION_ORDER: readonly PermissionName[] = [
  "read", "list", "write", "admin",
];

export type CredentialKind =
  | "person" | "dn-list" | "voms" | "auth-user" | "any-user";
export const CREDENTIAL_KINDS: readonly CredentialKind[] = [
  "person", "dn-list", "voms", "auth-user", "any-user",
];

/** Which child element carries the value for each valued credential kind. */
const VALUE_CHILD: Partial<Record<CredentialKind, string>> = {
  "person": "dn",
  "dn-list": "url",
  "voms": "fqan",
};

export interface CredentialRow {
  kind: CredentialKind;
  value: string; // empty for auth-user / any-user
}

export interface EntryRow {
  credentials: CredentialRow[];
  allow: Set<PermissionName>;
  deny: Set<PermissionName>;
}

export class GaclSyntaxError extends Error {}

// ---------------------------------------------------------------------------
// minimal strict XML reader (elements, text, self-closing, the five
// standard entities; comments and declarations skipped)

interface XmlElement {
  name: string;
  attrs: Record<string, string>;
  children: XmlElement[];
  text: string;
}

function decodeEntities(s: string): string {
  return s.replace(/&(lt|gt|amp|quot|apos|#\d+|#x[0-9a-fA-F]+);/g, (_, name) => {
    switch (name) {
      case "lt": return "<";
      case "gt": return ">";
      case "amp": return "&";
      case "quot": return '"';
      case "apos": return "'";
    }
    const code = name[1] === "x" || name[1] === "X"
      ? parseInt(name.slice(2), 16) : parseInt(name.slice(1), 10);
    return String.fromCodePoint(code);
  });
}

function parseXml(input: string): XmlElement {
  let pos = 0;
  const fail = (msg: string): never => {
    throw new GaclSyntaxError(`${msg} at offset ${pos}`);
  };

  const skipMisc = () => {
    for (;;) {
      while (pos < input.length && /\s/.test(input[pos])) pos++;
      if (input.startsWith("<?", pos)) {
        const end = input.indexOf("?>", pos);
        if (end < 0) fail("unterminated declaration");
        pos = end + 2;
      } else if (input.startsWith("<!--", pos)) {
        const end = input.indexOf("-->", pos);
        if (end < 0) fail("unterminated comment");
        pos = end + 3;
      } else {
        return;
      }
    }
  };

  const readElement = (): XmlElement => {
    if (input[pos] !== "<") fail("expected element");
    const open = /^<([A-Za-z][\w.-]*)((?:\s+[\w.-]+="[^"]*")*)\s*(\/?)>/.exec(
      input.slice(pos));
    if (!open) fail("malformed start tag");
    const [matched, name, attrText, selfClose] = open!;
    pos += matched.length;
    const attrs: Record<string, string> = {};
    for (const m of attrText.matchAll(/([\w.-]+)="([^"]*)"/g)) {
      attrs[m[1]] = decodeEntities(m[2]);
    }
    const el: XmlElement = { name, attrs, children: [], text: "" };
    if (selfClose) return el;
    for (;;) {
      const next = input.indexOf("<", pos);
      if (next < 0) fail(`unterminated <${name}>`);
      el.text += decodeEntities(input.slice(pos, next));
      pos = next;
      if (input.startsWith("<!--", pos)) {
        const end = input.indexOf("-->", pos);
        if (end < 0) fail("unterminated comment");
        pos = end + 3;
      } else if (input.startsWith("</", pos)) {
        const close = /^<\/([\w.-]+)\s*>/.exec(input.slice(pos));
        if (!close || close[1] !== name) fail(`mismatched </${name}>`);
        pos += close![0].length;
        return el;
      } else {
        el.children.push(readElement());
      }
    }
  };

  skipMisc();
  const root = readElement();
  skipMisc();
  if (pos !== input.length) fail("trailing content after document element");
  return root;
}

// ---------------------------------------------------------------------------

function escapeXml(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

function parsePermissionBlock(el: XmlElement): Set<PermissionName> {
  const perms = new Set<PermissionName>();
  for (const child of el.children) {
    if (!(PERMISSION_ORDER as readonly string[]).includes(child.name)) {
      throw new GaclSyntaxError(`unknown permission <${child.name}>`);
    }
    perms.add(child.name as PermissionName);
  }
  return perms;
}

function parseCredential(el: XmlElement): CredentialRow {
  if (!(CREDENTIAL_KINDS as readonly string[]).includes(el.name)) {
    throw new GaclSyntaxError(`unknown element <${el.name}> in entry`);
  }
  const kind = el.name as CredentialKind;
  const valueChild = VALUE_CHILD[kind];
  if (!valueChild) return { kind, value: "" };
  const child = el.children.find((c) => c.name === valueChild);
  if (!child) throw new GaclSyntaxError(`<${kind}> needs a <${valueChild}> child`);
  return { kind, value: child.text.trim() };
}

export class AclFormModel {
  constructor(public entries: EntryRow[] = []) {}

  static parse(xml: string): AclFormModel {
    const root = parseXml(xml);
    if (root.name !== "gacl") {
      throw new GaclSyntaxError(`document element is <${root.name}>, not <gacl>`);
    }
    const entries: EntryRow[] = [];
    for (const entryEl of root.children) {
      if (entryEl.name !== "entry") {
        throw new GaclSyntaxError(`unexpected <${entryEl.name}> under <gacl>`);
      }
      const entry: EntryRow = {
        credentials: [],
        allow: new Set(),
        deny: new Set(),
      };
      for (const child of entryEl.children) {
        if (child.name === "allow") {
          entry.allow = parsePermissionBlock(child);
        } else if (child.name === "deny") {
          entry.deny = parsePermissionBlock(child);
        } else {
          entry.credentials.push(parseCredential(child));
        }
      }
      entries.push(entry);
    }
    return new AclFormModel(entries);
  }

  /** Problems that would make the server reject this document. */
  validate(): string[] {
    const problems: string[] = [];
    this.entries.forEach((entry, i) => {
      if (entry.credentials.length === 0) {
        problems.push(`entry ${i + 1}: needs at least one credential`);
      }
      entry.credentials.forEach((cred) => {
        if (VALUE_CHILD[cred.kind] && !cred.value.trim()) {
          problems.push(`entry ${i + 1}: ${cred.kind} needs a value`);
        }
      });
    });
    return problems;
  }

  /** Same canonical form the server emits. */
  serialize(): string {
    const lines = ['<gacl version="0.9.0">'];
    for (const entry of this.entries) {
      lines.push("  <entry>");
      for (const cred of entry.credentials) {
        const child = VALUE_CHILD[cred.kind];
        lines.push(child
          ? `    <${cred.kind}><${child}>${escapeXml(cred.value)}</${child}></${cred.kind}>`
          : `    <${cred.kind}/>`);
      }
      for (const block of ["allow", "deny"] as const) {
        const perms = entry[block];
        if (perms.size > 0) {
          const inner = PERMISSION_ORDER
            .filter((p) => perms.has(p)).map((p) => `<${p}/>`).join("");
          lines.push(`    <${block}>${inner}</${block}>`);
        }
      }
      lines.push("  </entry>");
    }
    lines.push("</gacl>");
    return lines.join("\n") + "\n";
  }
}
