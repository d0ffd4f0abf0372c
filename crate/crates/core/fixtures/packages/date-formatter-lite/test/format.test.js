const assert = require('assert')
const DateFormatter = require('../src/formatter')

const fmt = new DateFormatter({ dateSettings: { days: ['Su', 'Mo', 'Tu', 'We', 'Th', 'Fr', 'Sa'] } })
assert.ok(fmt.formatDate('2020-01-01', 'l Y').endsWith('2020'))
